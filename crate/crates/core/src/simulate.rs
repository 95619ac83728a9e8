//! Online closed-loop rollout, quadratic costs and the unilateral
//! deviation check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::model::{DiscretePlant, GameWeights};
use crate::synthesis::GainSchedule;

/// Per-controller costs and the aggregate cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Costs {
    pub total: f64,
    pub per_player: Vec<f64>,
}

impl Costs {
    /// `J_1 / J_2`; NaN with fewer than two controllers.
    pub fn ratio(&self) -> f64 {
        match self.per_player.as_slice() {
            [j1, j2, ..] => j1 / j2,
            _ => f64::NAN,
        }
    }
}

/// States `x(0..=N)`, inputs `u_i(0..N)` and their costs.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vector>,
    /// `controls[i][k]` is `u_i(k)`.
    pub controls: Vec<Vec<Vector>>,
    pub costs: Costs,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    /// `z(k) = [x(k); u_1(k-1); ...; u_p(k-1)]` with zero history at `k = 0`.
    pub fn augmented_state(&self, k: usize) -> Vector {
        let x = &self.states[k];
        let n = self
            .controls
            .first()
            .and_then(|c| c.first())
            .map_or(0, |u| u.len());
        let mut z = Vector::zeros(x.len() + self.controls.len() * n);
        z.rows_mut(0, x.len()).copy_from(x);
        if k > 0 {
            for (i, u) in self.controls.iter().enumerate() {
                z.rows_mut(x.len() + i * n, n).copy_from(&u[k - 1]);
            }
        }
        z
    }

    /// CSV with header `k,x_1..x_M,u_1_1..u_p_N`; the final row has empty
    /// input fields.
    pub fn to_csv(&self) -> String {
        let m = self.states[0].len();
        let p = self.controls.len();
        let n = self
            .controls
            .first()
            .and_then(|c| c.first())
            .map_or(0, |u| u.len());
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["k".to_string()];
        header.extend((1..=m).map(|j| format!("x_{j}")));
        for i in 1..=p {
            header.extend((1..=n).map(|c| format!("u_{i}_{c}")));
        }
        wtr.write_record(&header).expect("in-memory write");
        for (k, x) in self.states.iter().enumerate() {
            let mut row = vec![k.to_string()];
            row.extend(x.iter().map(|v| v.to_string()));
            for ctrl in &self.controls {
                match ctrl.get(k) {
                    Some(u) => row.extend(u.iter().map(|v| v.to_string())),
                    None => row.extend(std::iter::repeat_n(String::new(), n)),
                }
            }
            wtr.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("ascii output")
    }

    /// Parses [`Trajectory::to_csv`] output. Costs are left at zero; use
    /// [`evaluate_costs`] to recompute them.
    pub fn from_csv(text: &str) -> Result<Self> {
        let parse_err = |message: String| Error::Parse {
            path: "trajectory".into(),
            message,
        };
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| parse_err(e.to_string()))?.clone();
        let m = header.iter().filter(|h| h.starts_with("x_")).count();
        let mut layout = Vec::new();
        for h in header.iter().filter(|h| h.starts_with("u_")) {
            let mut parts = h[2..].split('_').map(str::parse::<usize>);
            match (parts.next(), parts.next()) {
                (Some(Ok(i)), Some(Ok(c))) if i >= 1 && c >= 1 => layout.push((i - 1, c - 1)),
                _ => return Err(parse_err(format!("bad column `{h}`"))),
            }
        }
        let p = layout.iter().map(|(i, _)| i + 1).max().unwrap_or(0);
        let n = layout.iter().map(|(_, c)| c + 1).max().unwrap_or(0);
        if m == 0 || layout.len() != p * n {
            return Err(parse_err("inconsistent header".into()));
        }
        let mut states = Vec::new();
        let mut controls = vec![Vec::new(); p];
        for (row, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| parse_err(e.to_string()))?;
            let num = |idx: usize| -> Result<f64> {
                record[idx]
                    .parse::<f64>()
                    .map_err(|e| parse_err(format!("row {row}, column {idx}: {e}")))
            };
            let x = (0..m).map(|j| num(1 + j)).collect::<Result<Vec<_>>>()?;
            states.push(Vector::from_vec(x));
            if record.get(1 + m).is_some_and(|s| !s.is_empty()) {
                let mut us = vec![Vector::zeros(n); p];
                for (col, &(i, c)) in layout.iter().enumerate() {
                    us[i][c] = num(1 + m + col)?;
                }
                for (i, u) in us.into_iter().enumerate() {
                    controls[i].push(u);
                }
            }
        }
        if states.is_empty() || controls.iter().any(|c| c.len() + 1 != states.len()) {
            return Err(parse_err("expected N+1 state rows and N input rows".into()));
        }
        Ok(Self {
            states,
            controls,
            costs: Costs {
                total: 0.0,
                per_player: vec![0.0; p],
            },
        })
    }
}

/// A one-off additive change to a single controller's input.
#[derive(Debug, Clone)]
pub struct Deviation {
    pub controller: usize,
    pub step: usize,
    pub delta: Vector,
}

fn check_contract(dp: &DiscretePlant, g: &GainSchedule, x0: &[f64], w: &GameWeights) -> Result<()> {
    if g.layout() != dp.layout() {
        return Err(Error::Dimension(format!(
            "gain schedule layout {:?} does not match plant layout {:?}",
            g.layout(),
            dp.layout()
        )));
    }
    if x0.len() != dp.state_dim() {
        return Err(Error::Dimension(format!(
            "x0 has {} entries, plant has {} states",
            x0.len(),
            dp.state_dim()
        )));
    }
    w.check_against(dp)?;
    if g.horizon() != w.horizon() {
        return Err(Error::Dimension(format!(
            "schedule horizon {} differs from weights horizon {}",
            g.horizon(),
            w.horizon()
        )));
    }
    Ok(())
}

/// Runs the closed loop from `x0` with zero input history and fills the
/// costs.
pub fn rollout(
    dp: &DiscretePlant,
    g: &GainSchedule,
    x0: &[f64],
    w: &GameWeights,
) -> Result<Trajectory> {
    rollout_with_deviation(dp, g, x0, w, None)
}

/// As [`rollout`], with `deviation.delta` added to one controller's input
/// at one step. All feedback laws stay in place.
pub fn rollout_with_deviation(
    dp: &DiscretePlant,
    g: &GainSchedule,
    x0: &[f64],
    w: &GameWeights,
    deviation: Option<&Deviation>,
) -> Result<Trajectory> {
    check_contract(dp, g, x0, w)?;
    let layout = dp.layout();
    let (m, n, p) = (layout.state_dim, layout.input_dim, layout.controllers);
    if let Some(d) = deviation {
        if d.controller >= p || d.step >= g.horizon() || d.delta.len() != n {
            return Err(Error::Dimension("deviation outside the schedule".into()));
        }
    }

    let mut z = Vector::zeros(layout.dim());
    z.rows_mut(0, m).copy_from_slice(x0);
    let mut states = vec![Vector::from_column_slice(x0)];
    let mut controls: Vec<Vec<Vector>> = vec![Vec::with_capacity(g.horizon()); p];

    for k in 0..g.horizon() {
        let x = z.rows(0, m).into_owned();
        let mut next = dp.phi() * &x;
        let mut inputs = Vec::with_capacity(p);
        for i in 0..p {
            let mut u = g.coefficients(k, i) * &z;
            if let Some(d) = deviation.filter(|d| d.controller == i && d.step == k) {
                u += &d.delta;
            }
            let previous = z.rows(m + i * n, n).into_owned();
            next += &dp.gamma0()[i] * &u + &dp.gamma1()[i] * previous;
            inputs.push(u);
        }
        z.rows_mut(0, m).copy_from(&next);
        for (i, u) in inputs.into_iter().enumerate() {
            z.rows_mut(m + i * n, n).copy_from(&u);
            controls[i].push(u);
        }
        states.push(next);
    }

    let mut tr = Trajectory {
        states,
        controls,
        costs: Costs {
            total: 0.0,
            per_player: Vec::new(),
        },
    };
    tr.costs = evaluate_costs(&tr, w)?;
    Ok(tr)
}

fn quad(x: &Vector, w: &Matrix) -> f64 {
    x.dot(&(w * x))
}

/// Per-controller costs
/// `J_i = x(N)ᵀQ_{i,N}x(N) + Σ_k [x(k)ᵀQ_i x(k) + u_i(k)ᵀR_i u_i(k)]`
/// and the aggregate
/// `J = x(N)ᵀQ_{1,N}x(N) + Σ_k [x(k)ᵀQ_1 x(k) + Σ_i u_i(k)ᵀR_i u_i(k)]`.
pub fn evaluate_costs(tr: &Trajectory, w: &GameWeights) -> Result<Costs> {
    let horizon = w.horizon();
    let p = w.controllers();
    if tr.states.len() != horizon + 1
        || tr.controls.len() != p
        || tr.controls.iter().any(|c| c.len() != horizon)
    {
        return Err(Error::Dimension(format!(
            "trajectory does not match horizon {horizon} with {p} controllers"
        )));
    }
    if tr.states.iter().any(|x| x.len() != w.state_dim())
        || tr
            .controls
            .iter()
            .flatten()
            .any(|u| u.len() != w.input_dim())
    {
        return Err(Error::Dimension(
            "trajectory vector sizes do not match weights".into(),
        ));
    }
    let terminal = &tr.states[horizon];
    let mut per_player: Vec<f64> = w.q_terminal().iter().map(|q| quad(terminal, q)).collect();
    let mut effort = 0.0;
    let mut state_cost = quad(terminal, &w.q_terminal()[0]);
    for k in 0..horizon {
        let x = &tr.states[k];
        state_cost += quad(x, &w.q()[0]);
        for (i, cost) in per_player.iter_mut().enumerate() {
            let u_cost = quad(&tr.controls[i][k], &w.r()[i]);
            *cost += quad(x, &w.q()[i]) + u_cost;
            effort += u_cost;
        }
    }
    Ok(Costs {
        total: state_cost + effort,
        per_player,
    })
}

/// Whether every controller uses the same state weights, so the aggregate
/// cost is unambiguous.
pub fn shared_state_weights(w: &GameWeights) -> bool {
    w.q().windows(2).all(|p| p[0] == p[1]) && w.q_terminal().windows(2).all(|p| p[0] == p[1])
}

/// Relative slack allowed before a deviation counts as an improvement.
pub const NASH_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationTrial {
    pub controller: usize,
    pub step: usize,
    /// `J_i` with the deviation minus `J_i` at equilibrium.
    pub gain: f64,
    pub baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NashReport {
    pub trials: Vec<DeviationTrial>,
    pub min_gain: f64,
    pub passed: bool,
}

impl NashReport {
    /// True iff no trial lowered its deviator's cost by more than
    /// `rel_tol · (1 + J_i)`.
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.trials
            .iter()
            .all(|t| t.gain >= -rel_tol * (1.0 + t.baseline))
    }
}

/// Draws `trials` random single-step, single-controller input deviations
/// of norm `magnitude` and measures how each changes the deviator's cost.
///
/// Trial `t` draws from a ChaCha stream keyed by `(seed, t)`, so results do
/// not depend on thread scheduling.
pub fn nash_deviation_check(
    dp: &DiscretePlant,
    g: &GainSchedule,
    w: &GameWeights,
    x0: &[f64],
    trials: usize,
    magnitude: f64,
    seed: u64,
) -> Result<NashReport> {
    let equilibrium = rollout(dp, g, x0, w)?;
    let (p, n, horizon) = (g.controllers(), g.layout().input_dim, g.horizon());

    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let controller = rng.gen_range(0..p);
            let step = rng.gen_range(0..horizon);
            let delta = random_direction(&mut rng, n) * magnitude;
            let dev = Deviation {
                controller,
                step,
                delta,
            };
            let tr = rollout_with_deviation(dp, g, x0, w, Some(&dev))?;
            let baseline = equilibrium.costs.per_player[controller];
            Ok(DeviationTrial {
                controller,
                step,
                gain: tr.costs.per_player[controller] - baseline,
                baseline,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let min_gain = outcomes
        .iter()
        .map(|t| t.gain)
        .fold(f64::INFINITY, f64::min);
    let mut report = NashReport {
        trials: outcomes,
        min_gain,
        passed: false,
    };
    report.passed = report.passes(NASH_TOLERANCE);
    Ok(report)
}

fn random_direction(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    loop {
        let v = Vector::from_fn(n, |_, _| rng.gen_range(-1.0..=1.0));
        let norm = v.norm();
        if norm > 1e-3 {
            return v / norm;
        }
    }
}
