//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "plant":   { "A": [[..]], "B": [[[..]], ..], "delays": [0.01, {"sc": 0.004, "ca": 0.006}], "h": 0.05 },
//!   "weights": { "Q": [..], "QN": [..], "R": [..], "horizon": 50 },
//!   "x0": [1.0, 0.0],
//!   "scheme": "proposed",
//!   "sweep": { "delays_grid": [[0.0, 0.01], [0.0, 0.01]] }
//! }
//! ```
//!
//! `QN` defaults to `Q`, `x0` to the zero vector and `scheme` to
//! `proposed`. Unknown keys are rejected.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{check_delays, ContinuousPlant, GameWeights};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Controller design used for an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Delay-aware distributed game controllers.
    #[default]
    Proposed,
    /// Controller 1 alone, designed with its delay; the others stay idle.
    SingleDelayed,
    /// Distributed game controllers designed as if every delay were zero.
    DelayFreeGame,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [
        Scheme::Proposed,
        Scheme::SingleDelayed,
        Scheme::DelayFreeGame,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::SingleDelayed => "single_delayed",
            Scheme::DelayFreeGame => "delay_free_game",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.as_str() == s)
            .ok_or_else(|| Error::Parse {
                path: "scheme".into(),
                message: format!("unknown scheme `{s}`"),
            })
    }
}

/// A delay given either as a total or as its two network legs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DelaySpec {
    Total(f64),
    Split(SplitDelay),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitDelay {
    pub sc: f64,
    pub ca: f64,
}

impl DelaySpec {
    pub fn total(&self) -> f64 {
        match self {
            DelaySpec::Total(t) => *t,
            DelaySpec::Split(s) => s.sc + s.ca,
        }
    }
}

/// Per-controller lists of delays; the sweep visits their Cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySweep {
    pub delays_grid: Vec<Vec<f64>>,
}

impl DelaySweep {
    /// Grid points in lexicographic order, controller 1 outermost.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let mut points = vec![Vec::new()];
        for axis in &self.delays_grid {
            points = points
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&d| {
                        let mut p = prefix.clone();
                        p.push(d);
                        p
                    })
                })
                .collect();
        }
        points
    }

    pub(crate) fn validate(&self, controllers: usize, period: f64) -> Result<()> {
        if self.delays_grid.len() != controllers {
            return Err(Error::validation(
                "sweep-shape",
                format!(
                    "delays_grid has {} axes for {controllers} controllers",
                    self.delays_grid.len()
                ),
            ));
        }
        for axis in &self.delays_grid {
            if axis.is_empty() {
                return Err(Error::validation("sweep-shape", "empty delay axis"));
            }
        }
        for point in self.points() {
            check_delays(&point, period)?;
        }
        Ok(())
    }
}

/// Validated experiment: plant, weights, initial state, scheme and an
/// optional delay sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub plant: ContinuousPlant,
    pub weights: GameWeights,
    pub x0: Vec<f64>,
    pub scheme: Scheme,
    pub sweep: Option<DelaySweep>,
}

impl ExperimentConfig {
    pub fn new(
        plant: ContinuousPlant,
        weights: GameWeights,
        x0: Vec<f64>,
        scheme: Scheme,
        sweep: Option<DelaySweep>,
    ) -> Result<Self> {
        if weights.controllers() != plant.controllers()
            || weights.state_dim() != plant.state_dim()
            || weights.input_dim() != plant.input_dim()
        {
            return Err(Error::Dimension(format!(
                "weights are for p={}, M={}, N={} but plant has p={}, M={}, N={}",
                weights.controllers(),
                weights.state_dim(),
                weights.input_dim(),
                plant.controllers(),
                plant.state_dim(),
                plant.input_dim()
            )));
        }
        if x0.len() != plant.state_dim() {
            return Err(Error::validation(
                "x0-length",
                format!(
                    "x0 has {} entries, state dimension is {}",
                    x0.len(),
                    plant.state_dim()
                ),
            ));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(
                "finite-entries",
                "x0 contains NaN or Inf",
            ));
        }
        if let Some(sweep) = &sweep {
            sweep.validate(plant.controllers(), plant.period())?;
        }
        Ok(Self {
            plant,
            weights,
            x0,
            scheme,
            sweep,
        })
    }

    pub fn to_json(&self) -> String {
        let doc = ConfigDoc {
            plant: PlantDoc {
                a: linalg::to_rows(self.plant.a()),
                b: self.plant.b().iter().map(linalg::to_rows).collect(),
                delays: self
                    .plant
                    .delays()
                    .iter()
                    .map(|&d| DelaySpec::Total(d))
                    .collect(),
                h: self.plant.period(),
            },
            weights: WeightsDoc {
                q: self.weights.q().iter().map(linalg::to_rows).collect(),
                qn: Some(
                    self.weights
                        .q_terminal()
                        .iter()
                        .map(linalg::to_rows)
                        .collect(),
                ),
                r: self.weights.r().iter().map(linalg::to_rows).collect(),
                horizon: self.weights.horizon(),
            },
            x0: Some(self.x0.clone()),
            scheme: Some(self.scheme),
            sweep: self.sweep.clone(),
        };
        let mut text = serde_json::to_string_pretty(&doc).expect("config is always serializable");
        text.push('\n');
        text
    }
}

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    plant: PlantDoc,
    weights: WeightsDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scheme: Option<Scheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sweep: Option<DelaySweep>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlantDoc {
    #[serde(rename = "A")]
    a: Rows,
    #[serde(rename = "B")]
    b: Vec<Rows>,
    delays: Vec<DelaySpec>,
    h: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsDoc {
    #[serde(rename = "Q")]
    q: Vec<Rows>,
    #[serde(rename = "QN", default, skip_serializing_if = "Option::is_none")]
    qn: Option<Vec<Rows>>,
    #[serde(rename = "R")]
    r: Vec<Rows>,
    horizon: usize,
}

fn matrices(rows: &[Rows], path: &str) -> Result<Vec<Matrix>> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            linalg::from_rows(r).map_err(|e| match e {
                Error::Dimension(msg) => Error::Parse {
                    path: format!("{path}[{i}]"),
                    message: msg,
                },
                other => other,
            })
        })
        .collect()
}

/// Parses and validates a configuration document.
pub fn load_config(text: &str) -> Result<ExperimentConfig> {
    let mut de = serde_json::Deserializer::from_str(text);
    let doc: ConfigDoc = serde_path_to_error::deserialize(&mut de).map_err(|e| Error::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    de.end().map_err(|e| Error::Parse {
        path: ".".into(),
        message: e.to_string(),
    })?;

    let a = matrices(std::slice::from_ref(&doc.plant.a), "plant.A")?.remove(0);
    let b = matrices(&doc.plant.b, "plant.B")?;
    let delays: Vec<f64> = doc.plant.delays.iter().map(DelaySpec::total).collect();
    let plant = ContinuousPlant::new(a, b, delays, doc.plant.h)?;

    let q = matrices(&doc.weights.q, "weights.Q")?;
    let qn = match &doc.weights.qn {
        Some(qn) => matrices(qn, "weights.QN")?,
        None => q.clone(),
    };
    let r = matrices(&doc.weights.r, "weights.R")?;
    let weights = GameWeights::new(q, qn, r, doc.weights.horizon)?;

    let x0 = doc.x0.unwrap_or_else(|| vec![0.0; plant.state_dim()]);
    ExperimentConfig::new(
        plant,
        weights,
        x0,
        doc.scheme.unwrap_or_default(),
        doc.sweep,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "plant": {"A": [[-1.0]], "B": [[[1.0]]], "delays": [0.1], "h": 0.5},
        "weights": {"Q": [[[1.0]]], "R": [[[1.0]]], "horizon": 4}
    }"#;

    #[test]
    fn minimal_document_gets_defaults() {
        let cfg = load_config(MINIMAL).unwrap();
        assert_eq!(cfg.x0, vec![0.0]);
        assert_eq!(cfg.scheme, Scheme::Proposed);
        assert_eq!(cfg.weights.q_terminal(), cfg.weights.q());
        assert!(cfg.sweep.is_none());
    }

    #[test]
    fn delay_at_period_is_delay_bound() {
        let text = MINIMAL.replace("\"delays\": [0.1]", "\"delays\": [0.5]");
        let err = load_config(&text).unwrap_err();
        assert!(err.to_string().contains("delay-bound"), "{err}");
    }

    #[test]
    fn split_delays_are_summed() {
        let text = MINIMAL.replace("[0.1]", r#"[{"sc": 0.125, "ca": 0.25}]"#);
        let cfg = load_config(&text).unwrap();
        assert_eq!(cfg.plant.delays(), &[0.375]);
    }

    #[test]
    fn unknown_keys_rejected_with_path() {
        let text = MINIMAL.replace("\"h\": 0.5", "\"h\": 0.5, \"tau\": 1");
        match load_config(&text).unwrap_err() {
            Error::Parse { path, message } => {
                assert_eq!(path, "plant.tau");
                assert!(message.contains("tau"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let text = MINIMAL.replace("\"horizon\": 4", "\"horizon\": -4");
        match load_config(&text).unwrap_err() {
            Error::Parse { path, .. } => assert_eq!(path, "weights.horizon"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_matrix_reports_path() {
        let text = MINIMAL.replace("\"B\": [[[1.0]]]", "\"B\": [[[1.0], [1.0, 2.0]]]");
        match load_config(&text).unwrap_err() {
            Error::Parse { path, .. } => assert_eq!(path, "plant.B[0]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sweep_grid_validated() {
        let text = MINIMAL.replace(
            "\"horizon\": 4}",
            "\"horizon\": 4}, \"sweep\": {\"delays_grid\": [[0.0, 0.5]]}",
        );
        assert!(matches!(load_config(&text), Err(Error::DelayBound { .. })));
        let text = MINIMAL.replace(
            "\"horizon\": 4}",
            "\"horizon\": 4}, \"sweep\": {\"delays_grid\": [[0.0], [0.1]]}",
        );
        assert!(load_config(&text).is_err());
    }

    #[test]
    fn x0_length_checked() {
        let text = MINIMAL.replace("\"horizon\": 4}", "\"horizon\": 4}, \"x0\": [1.0, 2.0]");
        assert!(matches!(
            load_config(&text),
            Err(Error::Validation {
                invariant: "x0-length",
                ..
            })
        ));
    }

    #[test]
    fn sweep_points_are_lexicographic() {
        let sweep = DelaySweep {
            delays_grid: vec![vec![0.0, 1.0], vec![2.0, 3.0, 4.0]],
        };
        let pts = sweep.points();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0], vec![0.0, 2.0]);
        assert_eq!(pts[1], vec![0.0, 3.0]);
        assert_eq!(pts[5], vec![1.0, 4.0]);
    }

    #[test]
    fn scheme_names() {
        for s in Scheme::ALL {
            assert_eq!(s.as_str().parse::<Scheme>().unwrap(), s);
        }
        assert!("greedy".parse::<Scheme>().is_err());
    }
}
