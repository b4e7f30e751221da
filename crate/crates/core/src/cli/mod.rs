//! Command-line surface of the `hawkes-gaps` binary.

pub mod experiment;
pub mod io;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::error::HawkesError;
use crate::gaps::{common_windows, generate_window_set, observed_fraction, restrict_events, GapConfig, WindowLayout};
use crate::model::{ModelParams, WindowSet};
use crate::simulator::{count_histogram, simulate, SimConfig};
use experiment::{run_experiment, ExperimentConfig, FitSettings, Method, MethodSpec};
use io::{config_digest, read_events, read_text, read_windows, write_events, write_json, write_windows, CsvDoc, Provenance};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<HawkesError> for CliError {
    fn from(e: HawkesError) -> Self {
        match e {
            HawkesError::InvalidArgument(msg) => CliError::Usage(msg),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl CliError {
    /// 2 for numerical failures, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Numerical(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hawkes-gaps", version, about = "Multivariate Hawkes simulation and gap-aware estimation")]
pub struct Cli {
    /// Worker threads for replicated work (default: one per core).
    #[arg(long, global = true, env = "HAWKES_GAPS_JOBS")]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one path and write it as an events CSV.
    Simulate(SimulateArgs),
    /// Draw observation windows and write them as a windows CSV.
    Windows(WindowsArgs),
    /// Fit one estimator to an events file and write the result as JSON.
    Fit(FitArgs),
    /// Run a replicated experiment and write its summary CSVs.
    Experiment(ExperimentArgs),
    /// Event-count histogram of repeated short simulations.
    Histogram(HistogramArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Parameters JSON: {"u": [..], "a": [[..], ..], "b": [..]}.
    #[arg(long)]
    pub params: PathBuf,
    /// End of the simulated interval (time units).
    #[arg(long)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct WindowsArgs {
    /// Sampling parameter; gaps are U(tau_min / 2p, tau_max / 2p) long.
    #[arg(long)]
    pub p: f64,
    /// Shortest window (time units).
    #[arg(long)]
    pub tau_min: f64,
    /// Longest window (time units).
    #[arg(long)]
    pub tau_max: f64,
    /// End of the observation period (time units).
    #[arg(long)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1)]
    pub entities: usize,
    /// Independent windows for each entity instead of one shared draw.
    #[arg(long)]
    pub per_entity: bool,
    /// Keep only the time observed by every entity.
    #[arg(long)]
    pub intersect: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Mhp,
    MhpgFixed,
    MhpgBox,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub events: PathBuf,
    /// Windows CSV; events outside the windows are dropped before fitting.
    #[arg(long)]
    pub windows: Option<PathBuf>,
    /// Estimator settings JSON, e.g. {"method": "mhpg-box", "ratio": 20,
    /// "mu": 0.5, "tol": 1e-6, "max_iter": 500}. Flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Upper bound ratio C in u <= boundary <= C u (mhpg-box only).
    #[arg(long)]
    pub ratio: Option<f64>,
    /// L1 penalty weight on a (default: 0.01 * observed events / N^2).
    #[arg(long)]
    pub mu: Option<f64>,
    /// Relative parameter change below which the fit stops.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Observation period end (time units), if not recorded in the files.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Number of entities, if not recorded in the files.
    #[arg(long)]
    pub entities: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Experiment config JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HistogramArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    /// Counts are taken on (0, interval_end] (time units).
    #[arg(long, default_value_t = 20.0)]
    pub interval_end: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Windows(args) => cmd_windows(&args),
        Command::Fit(args) => cmd_fit(&args),
        Command::Experiment(args) => cmd_experiment(&args, cli.jobs),
        Command::Histogram(args) => cmd_histogram(&args, cli.jobs),
    }
}

fn read_params(path: &Path) -> Result<ModelParams, CliError> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::Usage(format!("{}: malformed parameters: {e}", path.display())))
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let params = read_params(&args.params)?;
    let events = simulate(&SimConfig::new(params.clone(), args.horizon, args.seed))?;
    let digest = config_digest(&json!({ "params": params, "horizon": args.horizon }))?;
    let prov = Provenance::new(digest, Some(args.seed)).with_shape(args.horizon, params.n());
    write_events(&args.out, &events, &prov)?;
    log::info!("wrote {} events to {}", events.total_count(), args.out.display());
    Ok(())
}

pub fn cmd_windows(args: &WindowsArgs) -> Result<(), CliError> {
    if args.entities == 0 {
        return Err(CliError::Usage("--entities must be positive".into()));
    }
    let gaps = GapConfig { p: args.p, tau_min: args.tau_min, tau_max: args.tau_max, horizon: args.horizon, seed: args.seed };
    let layout = if args.per_entity { WindowLayout::PerEntity } else { WindowLayout::Shared };
    let mut windows = generate_window_set(&gaps, args.entities, layout)?;
    if args.intersect {
        windows = common_windows(&windows)?;
    }
    let digest = config_digest(&json!({
        "p": args.p,
        "tau_min": args.tau_min,
        "tau_max": args.tau_max,
        "horizon": args.horizon,
        "entities": args.entities,
        "layout": layout,
        "intersect": args.intersect,
    }))?;
    let prov = Provenance::new(digest, Some(args.seed)).with_shape(args.horizon, args.entities);
    write_windows(&args.out, &windows, &prov)?;
    log::info!("observed fraction per entity: {:?}", observed_fraction(&windows));
    Ok(())
}

#[derive(Debug, Serialize)]
struct BoundaryEntry {
    entity: usize,
    window: usize,
    c: f64,
    d: f64,
    value: f64,
}

#[derive(Debug, Serialize)]
struct EventAccount {
    entity: usize,
    input: usize,
    kept: usize,
    dropped: usize,
}

#[derive(Debug, Serialize)]
struct FitReport {
    method: MethodSpec,
    params: ModelParams,
    lambda_bar: Vec<BoundaryEntry>,
    objective_trace: Vec<f64>,
    iterations: usize,
    converged: bool,
    mu: f64,
    ascent_steps: usize,
    floored_intensities: usize,
    stalled_decay_updates: usize,
    events: Vec<EventAccount>,
}

fn resolve_method(args: &FitArgs) -> Result<MethodSpec, CliError> {
    let mut spec = match &args.config {
        Some(path) => serde_json::from_str::<MethodSpec>(&read_text(path)?)
            .map_err(|e| CliError::Usage(format!("{}: malformed fit settings: {e}", path.display())))?,
        None => MethodSpec { method: Method::MhpgBox { ratio: 20.0 }, settings: FitSettings::default() },
    };
    let ratio = args.ratio.or(match spec.method {
        Method::MhpgBox { ratio } => Some(ratio),
        _ => None,
    });
    spec.method = match args.method {
        Some(MethodArg::Mhp) => Method::Mhp,
        Some(MethodArg::MhpgFixed) => Method::MhpgFixed,
        Some(MethodArg::MhpgBox) => Method::MhpgBox { ratio: ratio.unwrap_or(20.0) },
        None => match spec.method {
            Method::MhpgBox { .. } => Method::MhpgBox { ratio: ratio.unwrap_or(20.0) },
            other => other,
        },
    };
    if args.ratio.is_some() && !matches!(spec.method, Method::MhpgBox { .. }) {
        return Err(CliError::Usage("--ratio only applies to --method mhpg-box".into()));
    }
    if args.mu.is_some() {
        spec.settings.mu = args.mu;
    }
    if let Some(tol) = args.tol {
        spec.settings.tol = tol;
    }
    if let Some(max_iter) = args.max_iter {
        spec.settings.max_iter = max_iter;
    }
    Ok(spec)
}

pub fn cmd_fit(args: &FitArgs) -> Result<(), CliError> {
    let spec = resolve_method(args)?;
    let windows = match &args.windows {
        Some(path) => Some(read_windows(path, args.horizon, args.entities)?),
        None if spec.method != Method::Mhp => {
            return Err(CliError::Usage(format!(
                "method {} models the gaps and needs a windows file (--windows)",
                spec.method.label()
            )))
        }
        None => None,
    };
    let horizon = args.horizon.or(windows.as_ref().map(WindowSet::horizon));
    let entities = args.entities.or(windows.as_ref().map(WindowSet::n));
    let events = read_events(&args.events, horizon, entities)?;
    let windows = match windows {
        Some(w) => w,
        None => WindowSet::full(events.n(), events.horizon())?,
    };
    let observed = restrict_events(&events, &windows)?;
    let accounts: Vec<EventAccount> = events
        .counts()
        .into_iter()
        .zip(observed.counts())
        .enumerate()
        .map(|(entity, (input, kept))| EventAccount { entity, input, kept, dropped: input - kept })
        .collect();
    for a in accounts.iter().filter(|a| a.dropped > 0) {
        log::info!("entity {}: dropped {} of {} events outside the windows", a.entity, a.dropped, a.input);
    }

    let result = spec.method.fit(&observed, &windows, &spec.settings)?;
    let fitted_windows = match spec.method {
        Method::Mhp => WindowSet::full(observed.n(), observed.horizon())?,
        _ => windows,
    };
    let lambda_bar = (0..fitted_windows.n())
        .flat_map(|m| {
            let values = result.bounds.entity(m);
            fitted_windows.windows(m).iter().zip(values).enumerate().map(move |(k, (w, &value))| BoundaryEntry {
                entity: m,
                window: k,
                c: w.start,
                d: w.end,
                value,
            })
        })
        .collect();
    let report = FitReport {
        method: spec,
        params: result.params,
        lambda_bar,
        objective_trace: result.objective_trace,
        iterations: result.iterations,
        converged: result.converged,
        mu: result.mu,
        ascent_steps: result.ascent_steps,
        floored_intensities: result.flags.floored_intensities,
        stalled_decay_updates: result.flags.stalled_decay_updates,
        events: accounts,
    };
    write_json(&args.out, &report)?;
    if !report.converged {
        log::warn!("fit stopped after {} iterations without converging", report.iterations);
    }
    Ok(())
}

pub fn cmd_experiment(args: &ExperimentArgs, jobs: Option<usize>) -> Result<(), CliError> {
    let mut config = ExperimentConfig::from_json(&read_text(&args.config)?)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let report = run_experiment(&config, jobs)?;
    report.write_to(&args.out)?;
    let failed = report.failed_fits();
    if report.failure_fraction() > 0.1 {
        return Err(CliError::Numerical(format!(
            "{failed} of {} fits failed (more than 10%); see failures.csv",
            report.fits.len()
        )));
    }
    if failed > 0 {
        log::warn!("{failed} of {} fits failed; see failures.csv", report.fits.len());
    }
    Ok(())
}

pub fn cmd_histogram(args: &HistogramArgs, jobs: Option<usize>) -> Result<(), CliError> {
    let params = read_params(&args.params)?;
    let sim = SimConfig::new(params.clone(), args.interval_end, args.seed);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        pool = pool.num_threads(j.max(1));
    }
    let pool = pool.build().map_err(|e| CliError::Usage(format!("cannot start worker threads: {e}")))?;
    let counts = pool.install(|| count_histogram(&sim, args.reps, args.interval_end))?;
    let digest = config_digest(&json!({ "params": params, "reps": args.reps, "interval_end": args.interval_end }))?;
    let prov = Provenance::new(digest, Some(args.seed)).with_shape(args.interval_end, params.n());
    let mut doc = CsvDoc::new(&prov, &["entity", "count", "frequency"])?;
    for (m, per_entity) in counts.iter().enumerate() {
        let mut freq = std::collections::BTreeMap::new();
        for &c in per_entity {
            *freq.entry(c).or_insert(0usize) += 1;
        }
        for (c, k) in freq {
            doc.row([m.to_string(), c.to_string(), k.to_string()])?;
        }
    }
    doc.save(&args.out)
}
