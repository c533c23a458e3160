//! Command implementations behind the `newsfetch` binary.
//!
//! Exit codes: 0 on success, 1 for usage, parse and configuration errors,
//! 2 when a file cannot be read or written.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use newsfetch::sim::{run_with, Selection, SimOptions};
use newsfetch::synth::{self, SynthParams};
use newsfetch::{parse_trace, serialize_trace, Config, MetricsReport, Trace};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Parse { .. } => 1,
            CliError::Io { .. } => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "newsfetch",
    version,
    about = "Energy- and data-aware news prefetching simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic trace.
    Generate {
        /// JSON document of synth parameters; flags below override it.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        days: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate one trace and write the metrics report as JSON.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate once per budget and write a CSV row for each.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated prefetch budgets, e.g. "0,5,10".
        #[arg(long)]
        budgets: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump the learned preference model, predictor state and metrics.
    Report {
        #[command(flatten)]
        run: RunArgs,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// JSON config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = SelectionArg::Preference)]
    pub selection: SelectionArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectionArg {
    Preference,
    Random,
}

impl From<SelectionArg> for Selection {
    fn from(s: SelectionArg) -> Self {
        match s {
            SelectionArg::Preference => Selection::Preference,
            SelectionArg::Random => Selection::Random,
        }
    }
}

/// Parses `args` (program name first) and runs the command. Help and
/// version requests print and succeed.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("newsfetch: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate {
            params,
            seed,
            days,
            out,
        } => cmd_generate(params.as_deref(), seed, days, &out),
        Command::Simulate { run, out } => cmd_simulate(&run, &out),
        Command::Sweep { run, budgets, out } => cmd_sweep(&run, &budgets, &out),
        Command::Report { run, out } => cmd_report(&run, out.as_deref()),
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn parse_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Parse {
        path: path.to_owned(),
        message: e.to_string(),
    }
}

pub fn load_trace(path: &Path) -> Result<Trace, CliError> {
    parse_trace(&read(path)?).map_err(|e| parse_err(path, e))
}

pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<Config, CliError> {
    let mut cfg = match path {
        Some(p) => {
            let bytes = read(p)?;
            let text = std::str::from_utf8(&bytes).map_err(|e| parse_err(p, e))?;
            Config::from_json(text).map_err(|e| parse_err(p, e))?
        }
        None => Config::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

pub fn cmd_generate(params: Option<&Path>, seed: Option<u64>, days: Option<u32>, out: &Path) -> Result<(), CliError> {
    let mut p = match params {
        Some(path) => {
            let bytes = read(path)?;
            serde_json::from_slice::<SynthParams>(&bytes).map_err(|e| parse_err(path, e))?
        }
        None => SynthParams::default(),
    };
    if let Some(s) = seed {
        p.seed = s;
    }
    if let Some(d) = days {
        p.days = d;
    }
    let trace = synth::generate(&p).map_err(|e| CliError::Usage(e.to_string()))?;
    write(out, serialize_trace(&trace).as_bytes())
}

fn options(run: &RunArgs) -> SimOptions {
    SimOptions {
        selection: run.selection.into(),
        ..SimOptions::default()
    }
}

pub fn cmd_simulate(run: &RunArgs, out: &Path) -> Result<(), CliError> {
    let trace = load_trace(&run.trace)?;
    let cfg = load_config(run.config.as_deref(), run.seed)?;
    let report = run_with(&trace, &cfg, options(run)).report;
    write(out, (report.to_json() + "\n").as_bytes())
}

pub fn parse_budgets(list: &str) -> Result<Vec<usize>, CliError> {
    let budgets: Vec<usize> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| CliError::Usage(format!("budget {s:?} is not a non-negative integer")))
        })
        .collect::<Result<_, _>>()?;
    if budgets.is_empty() {
        return Err(CliError::Usage("empty budget list".into()));
    }
    Ok(budgets)
}

#[derive(Debug, Serialize)]
struct SweepRow {
    budget: usize,
    hits: u64,
    #[serde(rename = "H")]
    hit_ratio: f64,
    #[serde(rename = "B")]
    bandwidth_ratio: f64,
    hb_metric: f64,
    cellular_bytes: u64,
    energy_joules: f64,
    mean_freshness_age_s: f64,
}

impl SweepRow {
    fn new(budget: usize, r: &MetricsReport) -> Self {
        SweepRow {
            budget,
            hits: r.hits,
            hit_ratio: r.hit_ratio,
            bandwidth_ratio: r.bandwidth_ratio,
            hb_metric: r.hb_metric,
            cellular_bytes: r.cellular_bytes,
            energy_joules: r.energy_joules,
            mean_freshness_age_s: r.mean_freshness_age_s,
        }
    }
}

/// One simulation per budget, run concurrently; rows come back ordered by
/// budget.
pub fn sweep(trace: &Trace, cfg: &Config, opts: SimOptions, budgets: &[usize]) -> Vec<(usize, MetricsReport)> {
    let mut sorted = budgets.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let reports: Vec<MetricsReport> = std::thread::scope(|s| {
        let handles: Vec<_> = sorted
            .iter()
            .map(|&b| {
                let mut c = *cfg;
                c.scheduler.budget_count = b;
                s.spawn(move || run_with(trace, &c, opts).report)
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });
    sorted.into_iter().zip(reports).collect()
}

pub fn sweep_csv(rows: &[(usize, MetricsReport)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (b, r) in rows {
        w.serialize(SweepRow::new(*b, r)).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is UTF-8")
}

pub fn cmd_sweep(run: &RunArgs, budgets: &str, out: &Path) -> Result<(), CliError> {
    let budgets = parse_budgets(budgets)?;
    let trace = load_trace(&run.trace)?;
    let cfg = load_config(run.config.as_deref(), run.seed)?;
    let rows = sweep(&trace, &cfg, options(run), &budgets);
    write(out, sweep_csv(&rows).as_bytes())
}

#[derive(Debug, Serialize)]
struct Predictions {
    mean_fetch_s: f64,
    fetches_observed: u64,
    stay_by_ap: std::collections::BTreeMap<String, f64>,
}

pub fn cmd_report(run: &RunArgs, out: Option<&Path>) -> Result<(), CliError> {
    let trace = load_trace(&run.trace)?;
    let cfg = load_config(run.config.as_deref(), run.seed)?;
    let outcome = run_with(&trace, &cfg, options(run));
    let sessions = &outcome.predictor.sessions;
    let stay_by_ap = trace
        .network()
        .iter()
        .filter_map(|n| n.ap_id.clone())
        .map(|ap| {
            let stay = sessions.expected_stay(&ap);
            (ap, stay)
        })
        .collect();
    let doc = serde_json::json!({
        "metrics": outcome.report,
        "preference": outcome.model,
        "predictor": outcome.predictor,
        "predictions": Predictions {
            mean_fetch_s: outcome.predictor.fetch.estimate_fetch(),
            fetches_observed: outcome.predictor.fetch.count(),
            stay_by_ap,
        },
        "cached_articles": outcome.cache.len(),
    });
    let text = serde_json::to_string_pretty(&doc).expect("report serializes") + "\n";
    match out {
        Some(p) => write(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
