//! `spectral-ot` command-line driver.
//!
//! Exit codes: 0 success, 1 failed assertion or other runtime error,
//! 2 malformed input, 3 non-convergence.

mod commands;
mod failure;
mod repro;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use failure::Failure;

#[derive(Parser, Debug)]
#[command(name = "spectral-ot", version, about = "Spectral Wasserstein transport: couplings, Gaussian costs, flows and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimal coupling between two discrete measures.
    Couple(CoupleArgs),
    /// Covariance cost between two Gaussian measures.
    Gaussian(GaussianArgs),
    /// MMD particle flow or Gaussian affine flow.
    Flow(FlowArgs),
    /// Run a named property suite.
    Check(CheckArgs),
    /// Grid oracle against the solver (d = 2).
    Oracle(OracleArgs),
    /// Reproduce the reference experiments.
    Repro(ReproArgs),
}

#[derive(Args, Debug)]
pub struct CoupleArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    /// Schatten exponent: 1, 2, inf or any real >= 1.
    #[arg(long)]
    pub p: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Matched-pairs CSV (source_idx, target_idx, mass, tie).
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Also run the grid oracle with N angles and N boundary points.
    #[arg(long, value_name = "N")]
    pub oracle_grid: Option<usize>,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-7)]
    pub stop_gap: f64,
}

#[derive(Args, Debug)]
pub struct GaussianArgs {
    #[arg(long)]
    pub m0: PathBuf,
    #[arg(long)]
    pub m1: PathBuf,
    #[arg(long)]
    pub p: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowMode {
    Particle,
    Gaussian,
}

#[derive(Args, Debug)]
pub struct FlowArgs {
    #[arg(long, value_enum, default_value_t = FlowMode::Particle)]
    pub mode: FlowMode,
    #[arg(long)]
    pub p: String,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    /// Step size; defaults to the per-exponent value scaled by n.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, default_value_t = 1e-2)]
    pub eps: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 200)]
    pub m: usize,
    /// JSON cloud spec for the source (defaults to the reference source).
    #[arg(long)]
    pub source_cfg: Option<PathBuf>,
    /// JSON cloud spec for the target (defaults to the reference target).
    #[arg(long)]
    pub target_cfg: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub snapshot_every: usize,
    /// Initial Gaussian (gaussian mode).
    #[arg(long)]
    pub m0: Option<PathBuf>,
    /// Reference Gaussian of the relative entropy (gaussian mode).
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Time step (gaussian mode).
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long)]
    pub trace: PathBuf,
    /// Full trace as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[arg(long, default_value = "all")]
    pub suite: String,
    /// Exponent; runs p = 2 and p = inf when omitted.
    #[arg(long)]
    pub p: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub instances: usize,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub p: String,
    #[arg(long, default_value_t = 128)]
    pub grid: usize,
    /// Relative tolerance between the oracle and the solver.
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReproArgs {
    #[command(subcommand)]
    pub which: ReproTarget,
}

#[derive(Subcommand, Debug)]
pub enum ReproTarget {
    /// Static couplings for p = 1, 2, inf on the shared clouds.
    Figure1 {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "figure1")]
        out_dir: PathBuf,
    },
    /// MMD flows for p = 1, 2, inf (or one exponent) on the shared clouds.
    Figure2 {
        #[arg(long)]
        p: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value_t = 10)]
        snapshot_every: usize,
        #[arg(long, default_value = "figure2")]
        out_dir: PathBuf,
    },
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("SPECTRAL_OT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("SPECTRAL_OT_THREADS must be a positive integer, got '{raw}'")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Other(format!("thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Couple(a) => commands::couple(&a),
        Command::Gaussian(a) => commands::gaussian(&a),
        Command::Flow(a) => commands::flow(&a),
        Command::Check(a) => commands::check(&a),
        Command::Oracle(a) => commands::oracle(&a),
        Command::Repro(a) => match a.which {
            ReproTarget::Figure1 { seed, out_dir } => repro::figure1(seed, &out_dir),
            ReproTarget::Figure2 { p, seed, steps, snapshot_every, out_dir } => {
                repro::figure2(p.as_deref(), seed, steps, snapshot_every, &out_dir)
            }
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
