//! Command-line front end.
//!
//! `synthesize` is the offline step and writes a gain file; `simulate`
//! replays a gain file (or designs on the fly) against the true delayed
//! plant. Every output is a pure function of the inputs, so reruns are
//! byte-identical.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, BlockLayout};
use crate::model::{self, discretize, load_config, DiscretePlant, ExperimentConfig, Scheme};
use crate::schemes::{self, ComparisonRow, SweepRow};
use crate::simulate::{self, Costs, Trajectory};
use crate::synthesis::GainSchedule;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

/// Caps the worker threads used by sweeps and deviation checks.
pub const THREADS_ENV: &str = "DELAY_LQGAME_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "delay-lqgame",
    version,
    about = "Distributed LQ control for networked systems with input delays"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print or write the delay-split discretization of the configured plant.
    Discretize(Common),
    /// Compute a gain schedule offline and write it as JSON.
    Synthesize(Common),
    /// Roll out the closed loop and write the trajectory plus a cost sidecar.
    Simulate(SimulateArgs),
    /// Proposed-scheme costs over the configured delay grid.
    Sweep(Common),
    /// All three schemes at every grid point.
    Compare(Common),
    /// Write a bundled experiment configuration.
    Preset(PresetArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the scheme named in the configuration.
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Gain file from `synthesize`; designed from the configuration when omitted.
    #[arg(long)]
    gains: Option<PathBuf>,
    /// Random unilateral deviations to test after the rollout.
    #[arg(long, default_value_t = 0)]
    nash_trials: usize,
    #[arg(long, default_value_t = 1e-2)]
    nash_magnitude: f64,
}

#[derive(Debug, Args)]
struct PresetArgs {
    #[arg(long, value_enum)]
    name: PresetName,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum SchemeArg {
    Proposed,
    SingleDelayed,
    DelayFreeGame,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Proposed => Scheme::Proposed,
            SchemeArg::SingleDelayed => Scheme::SingleDelayed,
            SchemeArg::DelayFreeGame => Scheme::DelayFreeGame,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PresetName {
    Generic,
    Lfc,
}

/// Persisted gain schedule. `steps[k][i]` holds the rows of controller
/// `i`'s coefficient matrix at step `k`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainFile {
    pub scheme: Scheme,
    pub state_dim: usize,
    pub input_dim: usize,
    pub controllers: usize,
    pub horizon: usize,
    pub plant_fingerprint: String,
    pub steps: Vec<Vec<Vec<Vec<f64>>>>,
}

impl GainFile {
    pub fn new(g: &GainSchedule, dp: &DiscretePlant) -> Self {
        let layout = g.layout();
        Self {
            scheme: g.scheme(),
            state_dim: layout.state_dim,
            input_dim: layout.input_dim,
            controllers: layout.controllers,
            horizon: g.horizon(),
            plant_fingerprint: dp.fingerprint(),
            steps: (0..g.horizon())
                .map(|k| {
                    (0..g.controllers())
                        .map(|i| linalg::to_rows(g.coefficients(k, i)))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn schedule(&self) -> Result<GainSchedule> {
        if self.steps.len() != self.horizon {
            return Err(Error::Dimension(format!(
                "gain file declares {} steps but holds {}",
                self.horizon,
                self.steps.len()
            )));
        }
        let layout = BlockLayout::new(self.state_dim, self.input_dim, self.controllers);
        let steps = self
            .steps
            .iter()
            .map(|step| {
                step.iter()
                    .map(|rows| linalg::from_rows(rows))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        GainSchedule::new(self.scheme, layout, steps)
    }
}

#[derive(Serialize)]
struct DiscretizationDoc {
    phi: Vec<Vec<f64>>,
    gamma0: Vec<Vec<Vec<f64>>>,
    gamma1: Vec<Vec<Vec<f64>>>,
    fingerprint: String,
}

#[derive(Serialize)]
struct NashSummary {
    trials: usize,
    magnitude: f64,
    min_gain: f64,
    passed: bool,
}

#[derive(Serialize)]
struct SimulationMeta {
    scheme: Scheme,
    delays: Vec<f64>,
    seed: u64,
    plant_fingerprint: String,
    costs: Costs,
    #[serde(skip_serializing_if = "Option::is_none")]
    nash: Option<NashSummary>,
}

#[derive(Serialize)]
struct TrajectoryDoc {
    states: Vec<Vec<f64>>,
    controls: Vec<Vec<Vec<f64>>>,
    costs: Costs,
}

impl From<&Trajectory> for TrajectoryDoc {
    fn from(tr: &Trajectory) -> Self {
        Self {
            states: tr
                .states
                .iter()
                .map(|x| x.iter().copied().collect())
                .collect(),
            controls: tr
                .controls
                .iter()
                .map(|c| c.iter().map(|u| u.iter().copied().collect()).collect())
                .collect(),
            costs: tr.costs.clone(),
        }
    }
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_OK
            };
            let _ = err.print();
            return code;
        }
    };
    match with_thread_cap(|| dispatch(cli.command)) {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

/// Exit status for a failed run: 2 for numerical breakdown, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_INVALID
    }
}

fn with_thread_cap<R: Send>(f: impl FnOnce() -> Result<R> + Send) -> Result<R> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return f();
    };
    let threads = raw
        .trim()
        .parse::<usize>()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| {
            Error::validation(
                "thread-count",
                format!("{THREADS_ENV}={raw:?} is not a positive integer"),
            )
        })?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;
    pool.install(f)
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Discretize(args) => {
            let config = read_config(&args.config)?;
            let dp = discretize(&config.plant)?;
            let doc = DiscretizationDoc {
                phi: linalg::to_rows(dp.phi()),
                gamma0: dp.gamma0().iter().map(linalg::to_rows).collect(),
                gamma1: dp.gamma1().iter().map(linalg::to_rows).collect(),
                fingerprint: dp.fingerprint(),
            };
            emit(args.out.as_deref(), &to_json(&doc))
        }
        Command::Synthesize(args) => {
            let config = read_config(&args.config)?;
            let scheme = args.scheme.map_or(config.scheme, Scheme::from);
            let g = schemes::design(&config, scheme)?;
            let dp = discretize(&config.plant)?;
            emit(args.out.as_deref(), &to_json(&GainFile::new(&g, &dp)))
        }
        Command::Simulate(args) => simulate_command(args),
        Command::Sweep(args) => {
            let config = read_config(&args.config)?;
            warn_on_distinct_weights(&config);
            let rows = schemes::sweep_delays(&config)?;
            let text = match args.format {
                Format::Csv => schemes::sweep_csv(&rows),
                Format::Json => to_json(&rows.iter().map(SweepJson::from).collect::<Vec<_>>()),
            };
            emit(args.out.as_deref(), &text)
        }
        Command::Compare(args) => {
            let config = read_config(&args.config)?;
            warn_on_distinct_weights(&config);
            let rows: Vec<ComparisonRow> = schemes::compare_schemes(&config)?;
            let text = match args.format {
                Format::Csv => schemes::comparison_csv(&rows),
                Format::Json => to_json(&rows),
            };
            emit(args.out.as_deref(), &text)
        }
        Command::Preset(args) => {
            let config = match args.name {
                PresetName::Generic => model::preset_generic(),
                PresetName::Lfc => model::preset_lfc(),
            };
            emit(args.out.as_deref(), &config.to_json())
        }
    }
}

#[derive(Serialize)]
struct SweepJson<'a> {
    delays: &'a [f64],
    costs: &'a Costs,
    ratio: Option<f64>,
}

impl<'a> From<&'a SweepRow> for SweepJson<'a> {
    fn from(row: &'a SweepRow) -> Self {
        let ratio = row.costs.ratio();
        Self {
            delays: &row.delays,
            costs: &row.costs,
            ratio: ratio.is_finite().then_some(ratio),
        }
    }
}

fn simulate_command(args: SimulateArgs) -> Result<()> {
    let common = &args.common;
    let config = read_config(&common.config)?;
    warn_on_distinct_weights(&config);
    let dp = discretize(&config.plant)?;
    let schedule = match &args.gains {
        Some(path) => {
            let file: GainFile = parse_json(path)?;
            if file.plant_fingerprint != dp.fingerprint() {
                return Err(Error::validation(
                    "plant-fingerprint",
                    format!("{} was synthesized for a different plant", path.display()),
                ));
            }
            if let Some(s) = common
                .scheme
                .map(Scheme::from)
                .filter(|&s| s != file.scheme)
            {
                return Err(Error::validation(
                    "scheme-mismatch",
                    format!(
                        "--scheme {s} but {} holds {} gains",
                        path.display(),
                        file.scheme
                    ),
                ));
            }
            file.schedule()?
        }
        None => schemes::design(&config, common.scheme.map_or(config.scheme, Scheme::from))?,
    };
    config.weights.check_against(&dp)?;
    if schedule.horizon() != config.weights.horizon() {
        return Err(Error::Dimension(format!(
            "gain schedule has {} steps, configured horizon is {}",
            schedule.horizon(),
            config.weights.horizon()
        )));
    }
    let trajectory = simulate::rollout(&dp, &schedule, &config.x0, &config.weights)?;

    let nash = if args.nash_trials > 0 {
        let report = simulate::nash_deviation_check(
            &dp,
            &schedule,
            &config.weights,
            &config.x0,
            args.nash_trials,
            args.nash_magnitude,
            common.seed,
        )?;
        Some(NashSummary {
            trials: args.nash_trials,
            magnitude: args.nash_magnitude,
            min_gain: report.min_gain,
            passed: report.passed,
        })
    } else {
        None
    };

    let text = match common.format {
        Format::Csv => trajectory.to_csv(),
        Format::Json => to_json(&TrajectoryDoc::from(&trajectory)),
    };
    emit(common.out.as_deref(), &text)?;

    let meta = SimulationMeta {
        scheme: schedule.scheme(),
        delays: config.plant.delays().to_vec(),
        seed: common.seed,
        plant_fingerprint: dp.fingerprint(),
        costs: trajectory.costs.clone(),
        nash,
    };
    match &common.out {
        Some(out) => emit(Some(&sidecar_path(out)), &to_json(&meta)),
        None => {
            eprint!("{}", to_json(&meta));
            Ok(())
        }
    }
}

/// `traj.csv` → `traj.meta.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("meta.json")
}

fn warn_on_distinct_weights(config: &ExperimentConfig) {
    if !simulate::shared_state_weights(&config.weights) {
        eprintln!("warning: controllers have different state weights; j_total uses controller 1's Q and QN");
    }
}

fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = read(path)?;
    load_config(&text)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    text
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}
