//! Command-line front end.
//!
//! Exit codes: `0` success, `1` usage, configuration or domain error, `2` a
//! verification suite failed.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bounds::{
    bound_report, BoundConstants, BoundReport, KPolicy, Problem, BOUND_CSV_HEADER,
};
use crate::experiments::{
    compare_bounds, preset_exponential_decay, preset_spiked_plateau, run_sweep, verdict,
    BoundComparison, ExperimentConfig, SweepResult, Verdict, SWEEP_CSV_HEADER,
};
use crate::verify::{run_suite, Suite};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VERIFY_FAILED: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "ridgebound",
    version,
    about = "Bias/variance bounds and simulations for ridge regression with possibly negative regularization"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate bound reports over the config's λ grid.
    Bounds(BoundsArgs),
    /// Run a seeded Monte Carlo sweep.
    Simulate(SimulateArgs),
    /// Run a verification suite.
    Verify(VerifyArgs),
    /// Run a regime preset and write a verdict on the sign of the optimal λ.
    Regimes(RegimesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct KChoice {
    /// Fixed split index.
    #[arg(long, conflicts_with = "b")]
    pub k: Option<usize>,
    /// Select k* = min{l : ρ_l > b}.
    #[arg(long)]
    pub b: Option<f64>,
}

impl KChoice {
    fn policy(&self) -> Option<KPolicy> {
        match (self.k, self.b) {
            (Some(k), _) => Some(KPolicy::Fixed { k }),
            (None, Some(b)) => Some(KPolicy::Kstar { b }),
            (None, None) => None,
        }
    }
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[command(flatten)]
    pub k_choice: KChoice,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Write only `sweep.csv` or only `summary.json`.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Overrides `base_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub k_choice: KChoice,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Instances (draws for `variance_mc`); suite default when absent.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Report file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeName {
    /// Exponential decay with γ = n^{-1/3} and k = n^{2/3}.
    Exp,
    /// Spiked plateau (4 spikes, p = 40n, λ_top/λ_tail = 500), SNR 1 by default.
    Spiked,
    /// The spiked plateau at SNR 100 by default.
    Negative,
}

#[derive(Debug, Args)]
pub struct RegimesArgs {
    #[arg(long, value_enum)]
    pub regime: RegimeName,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub snr: Option<f64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Everything a command writes to JSON.
#[derive(Debug, Serialize)]
pub struct OutputEnvelope<C: Serialize, R: Serialize> {
    pub tool_version: &'static str,
    pub config_echo: C,
    pub results: R,
    pub wall_time_seconds: f64,
    pub seed: Option<u64>,
}

#[derive(Debug)]
struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn new(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_ERROR,
            message: message.into(),
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::new(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::new(format!("{}: {e}", path.display()))
}

/// Parses arguments and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(command: Command) -> CliResult<i32> {
    match command {
        Command::Bounds(a) => cmd_bounds(a),
        Command::Simulate(a) => with_threads(a.threads, || cmd_simulate(a)),
        Command::Verify(a) => with_threads(a.threads, || cmd_verify(a)),
        Command::Regimes(a) => with_threads(a.threads, || cmd_regimes(a)),
    }
}

fn with_threads<F>(threads: Option<usize>, f: F) -> CliResult<i32>
where
    F: FnOnce() -> CliResult<i32> + Send,
{
    match threads {
        None => f(),
        Some(0) => Err(CliError::new("--threads must be ≥ 1")),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::new(format!("thread pool: {e}")))?
            .install(f),
    }
}

pub fn load_config(path: &Path) -> std::result::Result<ExperimentConfig, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn sink(out: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(io_err(dir))?;
            }
            Box::new(fs::File::create(p).map_err(io_err(p))?)
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> CliResult<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::new(e.to_string()))?;
    writeln!(w).map_err(|e| CliError::new(e.to_string()))
}

fn write_csv<const N: usize>(
    out: Option<&Path>,
    header: [&str; N],
    rows: impl Iterator<Item = [String; N]>,
) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(sink(out)?);
    let err = |e: csv::Error| CliError::new(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::new(e.to_string()))
}

/// One bound report per grid point; fails on the first undefined one.
pub fn bound_reports(config: &ExperimentConfig) -> crate::Result<Vec<BoundReport>> {
    let prep = config.prepare()?;
    let constants = BoundConstants {
        sigma_eps: config.sigma_eps,
        ..config.constants
    };
    config
        .lambda_grid
        .iter()
        .map(|&lambda| {
            let problem = Problem::new(&prep.spectrum, &prep.signal, config.n, lambda)?;
            bound_report(&problem, config.k_policy, &constants)
        })
        .collect()
}

fn cmd_bounds(a: BoundsArgs) -> CliResult<i32> {
    let start = Instant::now();
    let mut config = load_config(&a.config).map_err(CliError::new)?;
    if let Some(policy) = a.k_choice.policy() {
        config.k_policy = policy;
    }
    let reports = bound_reports(&config)?;
    match a.format {
        Format::Csv => write_csv(
            a.out.as_deref(),
            BOUND_CSV_HEADER,
            reports.iter().map(|r| r.csv_row()),
        )?,
        Format::Json => write_json(
            a.out.as_deref(),
            &OutputEnvelope {
                tool_version: env!("CARGO_PKG_VERSION"),
                config_echo: &config,
                results: &reports,
                wall_time_seconds: start.elapsed().as_secs_f64(),
                seed: None,
            },
        )?,
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct SweepPayload<'a> {
    #[serde(flatten)]
    sweep: &'a SweepResult,
    comparison: Vec<BoundComparison>,
}

fn write_sweep(
    out: &Path,
    format: Option<Format>,
    config: &ExperimentConfig,
    sweep: &SweepResult,
    start: Instant,
) -> CliResult<()> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    if format != Some(Format::Json) {
        write_csv(
            Some(&out.join("sweep.csv")),
            SWEEP_CSV_HEADER,
            sweep.rows.iter().map(|r| r.csv_row()),
        )?;
    }
    if format != Some(Format::Csv) {
        write_json(
            Some(&out.join("summary.json")),
            &OutputEnvelope {
                tool_version: env!("CARGO_PKG_VERSION"),
                config_echo: config,
                results: SweepPayload {
                    sweep,
                    comparison: compare_bounds(sweep),
                },
                wall_time_seconds: start.elapsed().as_secs_f64(),
                seed: Some(config.base_seed),
            },
        )?;
    }
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> CliResult<i32> {
    let start = Instant::now();
    let mut config = load_config(&a.config).map_err(CliError::new)?;
    if let Some(seed) = a.seed {
        config.base_seed = seed;
    }
    if let Some(policy) = a.k_choice.policy() {
        config.k_policy = policy;
    }
    let sweep = run_sweep(&config)?;
    write_sweep(&a.out, a.format, &config, &sweep, start)?;
    Ok(EXIT_OK)
}

fn cmd_verify(a: VerifyArgs) -> CliResult<i32> {
    let start = Instant::now();
    let report = run_suite(a.suite, a.seed, a.samples)?;
    #[derive(Serialize)]
    struct Echo {
        suite: Suite,
        seed: u64,
        samples: usize,
    }
    write_json(
        a.out.as_deref(),
        &OutputEnvelope {
            tool_version: env!("CARGO_PKG_VERSION"),
            config_echo: Echo {
                suite: a.suite,
                seed: a.seed,
                samples: report.samples,
            },
            results: &report,
            wall_time_seconds: start.elapsed().as_secs_f64(),
            seed: Some(a.seed),
        },
    )?;
    Ok(if report.passed {
        EXIT_OK
    } else {
        EXIT_VERIFY_FAILED
    })
}

/// The preset configuration behind `regimes`.
pub fn regime_config(
    regime: RegimeName,
    n: usize,
    snr: Option<f64>,
) -> crate::Result<ExperimentConfig> {
    match regime {
        RegimeName::Exp => preset_exponential_decay((n as f64).powf(-1.0 / 3.0), n),
        RegimeName::Spiked | RegimeName::Negative => {
            let default_snr = if regime == RegimeName::Negative {
                100.0
            } else {
                1.0
            };
            preset_spiked_plateau(4, 40 * n, 500.0, 1.0, n, snr.unwrap_or(default_snr))
        }
    }
}

fn cmd_regimes(a: RegimesArgs) -> CliResult<i32> {
    let start = Instant::now();
    let mut config = regime_config(a.regime, a.n, a.snr)?;
    config.base_seed = a.seed;
    if let Some(r) = a.replicates {
        config.replicates = r;
    }
    let sweep = run_sweep(&config)?;
    write_sweep(&a.out, None, &config, &sweep, start)?;
    #[derive(Serialize)]
    struct VerdictFile {
        regime: RegimeName,
        n: usize,
        #[serde(flatten)]
        verdict: Option<Verdict>,
    }
    let v = verdict(&sweep);
    write_json(
        Some(&a.out.join("verdict.json")),
        &VerdictFile {
            regime: a.regime,
            n: a.n,
            verdict: v,
        },
    )?;
    Ok(EXIT_OK)
}
