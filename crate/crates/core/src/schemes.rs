//! Comparison harness: the delay-aware distributed design against a
//! single delayed controller and a distributed design that ignores delays.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{check_delays, discretize, ExperimentConfig, Scheme};
use crate::simulate::{rollout, Costs, Trajectory};
use crate::synthesis::{self, GainSchedule};

/// Outcome of one scheme at one delay point.
#[derive(Debug, Clone)]
pub struct SchemeRun {
    pub scheme: Scheme,
    pub delays: Vec<f64>,
    pub schedule: GainSchedule,
    pub trajectory: Trajectory,
}

impl SchemeRun {
    pub fn costs(&self) -> &Costs {
        &self.trajectory.costs
    }
}

/// Gains a scheme applies to `config`'s plant. Every scheme is rolled out
/// on the true delayed discretization; they differ only in design.
pub fn design(config: &ExperimentConfig, scheme: Scheme) -> Result<GainSchedule> {
    let plant = &config.plant;
    let weights = &config.weights;
    let p = plant.controllers();
    match scheme {
        Scheme::Proposed => {
            let dp = discretize(plant)?;
            if p == 2 {
                synthesis::synthesize_two(&dp, weights)
            } else {
                synthesis::synthesize_multi(&dp, weights)
            }
        }
        Scheme::SingleDelayed => {
            let dp = discretize(plant)?.restrict(0)?;
            let g = synthesis::synthesize_single_delayed(&dp, &weights.restrict(0)?)?;
            g.lift(0, p)
        }
        Scheme::DelayFreeGame => {
            let nominal = discretize(&plant.with_delays(&vec![0.0; p])?)?;
            if p == 2 {
                synthesis::synthesize_delay_free_game(&nominal, weights)
            } else {
                let g = synthesis::synthesize_multi(&nominal, weights)?;
                let steps = (0..g.horizon())
                    .map(|k| (0..p).map(|i| g.coefficients(k, i).clone()).collect())
                    .collect();
                GainSchedule::new(Scheme::DelayFreeGame, g.layout(), steps)
            }
        }
    }
}

/// Designs `scheme` for `config` and rolls it out from `config.x0`.
pub fn run_scheme(config: &ExperimentConfig, scheme: Scheme) -> Result<SchemeRun> {
    let schedule = design(config, scheme)?;
    let dp = discretize(&config.plant)?;
    let trajectory = rollout(&dp, &schedule, &config.x0, &config.weights)?;
    Ok(SchemeRun {
        scheme,
        delays: config.plant.delays().to_vec(),
        schedule,
        trajectory,
    })
}

/// [`run_scheme`] with the plant delays replaced by `delays`.
pub fn run_scheme_at(
    config: &ExperimentConfig,
    delays: &[f64],
    scheme: Scheme,
) -> Result<SchemeRun> {
    let mut at = config.clone();
    at.plant = config.plant.with_delays(delays)?;
    run_scheme(&at, scheme)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub delays: Vec<f64>,
    pub costs: Costs,
}

fn grid_points(config: &ExperimentConfig) -> Result<Vec<Vec<f64>>> {
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::validation("sweep-grid", "configuration has no sweep grid"))?;
    let points = sweep.points();
    for point in &points {
        check_delays(point, config.plant.period())?;
    }
    Ok(points)
}

/// Proposed-scheme costs at every grid point, in grid order.
pub fn sweep_delays(config: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let points = grid_points(config)?;
    points
        .par_iter()
        .map(|delays| {
            let run = run_scheme_at(config, delays, Scheme::Proposed)?;
            Ok(SweepRow {
                delays: delays.clone(),
                costs: run.trajectory.costs,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub scheme: Scheme,
    pub delays: Vec<f64>,
    pub costs: Costs,
}

/// All three schemes at every grid point (or at the configured delays when
/// there is no grid), three consecutive rows per point.
pub fn compare_schemes(config: &ExperimentConfig) -> Result<Vec<ComparisonRow>> {
    let points = match config.sweep {
        Some(_) => grid_points(config)?,
        None => vec![config.plant.delays().to_vec()],
    };
    let jobs: Vec<(Vec<f64>, Scheme)> = points
        .into_iter()
        .flat_map(|d| Scheme::ALL.into_iter().map(move |s| (d.clone(), s)))
        .collect();
    jobs.par_iter()
        .map(|(delays, scheme)| {
            let run = run_scheme_at(config, delays, *scheme)?;
            Ok(ComparisonRow {
                scheme: *scheme,
                delays: delays.clone(),
                costs: run.trajectory.costs,
            })
        })
        .collect()
}

fn delay_columns(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("td{i}")).collect()
}

fn cost_columns(p: usize) -> Vec<String> {
    let mut cols = vec!["j_total".to_string()];
    cols.extend((1..=p).map(|i| format!("j_{i}")));
    cols
}

fn render(header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(&header).expect("in-memory write");
    for row in rows {
        wtr.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("ascii output")
}

fn numbers(values: &[f64]) -> impl Iterator<Item = String> + '_ {
    values.iter().map(|v| v.to_string())
}

/// `td1,..,tdp,j_total,j_1,..,j_p,ratio` with `ratio = j_1 / j_2`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let p = rows.first().map_or(2, |r| r.delays.len());
    let mut header = delay_columns(p);
    header.extend(cost_columns(p));
    header.push("ratio".into());
    render(
        header,
        rows.iter().map(|r| {
            let mut out: Vec<String> = numbers(&r.delays).collect();
            out.push(r.costs.total.to_string());
            out.extend(numbers(&r.costs.per_player));
            out.push(r.costs.ratio().to_string());
            out
        }),
    )
}

/// `scheme,td1,..,tdp,j_total,j_1,..,j_p`.
pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let p = rows.first().map_or(2, |r| r.delays.len());
    let mut header = vec!["scheme".to_string()];
    header.extend(delay_columns(p));
    header.extend(cost_columns(p));
    render(
        header,
        rows.iter().map(|r| {
            let mut out = vec![r.scheme.to_string()];
            out.extend(numbers(&r.delays));
            out.push(r.costs.total.to_string());
            out.extend(numbers(&r.costs.per_player));
            out
        }),
    )
}
