mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "qseal", version, about = "Quantum seal session simulator and eavesdropping analysis")]
struct Cli {
    /// Worker threads for parallel library calls (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one session and write its transcript and summary.
    Run(RunArgs),
    /// Tabulate the eavesdropper's information for a strategy as CSV.
    Mi(MiArgs),
    /// Compute the exposure report for a recorded transcript.
    Exposure(ExposureArgs),
    /// Run the acceptance checks.
    Selftest(SelftestArgs),
}

/// Every option can also be set in the config file; flags take precedence.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// Config file of key=value lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Probability that Alice announces a bit rather than a result.
    #[arg(long)]
    pub p_a: Option<String>,
    /// Target probability that at least one bit is delivered; sets N.
    #[arg(long)]
    pub c_m: Option<String>,
    /// Number of non-null shots; overrides the value derived from c_m.
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Eavesdropper, e.g. "passive" or "intercept_resend basis=random".
    #[arg(long)]
    pub strategy: Option<String>,
    /// Probability that a particle is lost in transit.
    #[arg(long)]
    pub loss: Option<String>,
    /// local or network.
    #[arg(long)]
    pub mode: Option<String>,
    /// Network role: alice, bob or eve-proxy.
    #[arg(long)]
    pub role: Option<String>,
    /// host:port to listen on (alice, eve-proxy) or connect to (bob).
    #[arg(long)]
    pub endpoint: Option<String>,
    /// host:port the eve-proxy forwards to.
    #[arg(long)]
    pub upstream: Option<String>,
    /// Message bit; drawn from the seed when absent.
    #[arg(long)]
    pub bit: Option<String>,
    /// Transcript path [default: transcript.jsonl].
    #[arg(long)]
    pub out: Option<String>,
    /// Also write the summary to this file.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MethodArg {
    Direct,
    Factored,
    Mc,
}

#[derive(Debug, Args)]
pub struct MiArgs {
    #[arg(long, default_value = "passive")]
    pub strategy: String,
    /// Shot counts, comma separated or as a range such as 1..=6.
    #[arg(long, default_value = "1")]
    pub n: String,
    /// Announcement probabilities, comma separated.
    #[arg(long, default_value = "0.5")]
    pub p_a: String,
    /// One or more of direct, factored, mc.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "factored")]
    pub method: Vec<MethodArg>,
    /// Monte Carlo sample count.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV path [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExposureArgs {
    /// Transcript written by `qseal run`.
    pub transcript: PathBuf,
    /// Absolute likelihood level.
    #[arg(long, conflicts_with = "delta")]
    pub epsilon: Option<f64>,
    /// Level relative to the all-identity likelihood [default: 0.1].
    #[arg(long)]
    pub delta: Option<f64>,
    /// stationary or per-shot.
    #[arg(long, default_value = "stationary")]
    pub family: String,
    /// Annealing steps per restart for the per-shot family.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Annealing restarts for the per-shot family.
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report path [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    /// Use the full sample sizes instead of the quick desk scale.
    #[arg(long)]
    pub full: bool,
    /// Append each check's running time.
    #[arg(long)]
    pub timings: bool,
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::config("jobs", e))?;
    }
    match cli.command {
        Command::Run(args) => commands::run(&args),
        Command::Mi(args) => commands::mi(&args),
        Command::Exposure(args) => commands::exposure(&args),
        Command::Selftest(args) => commands::selftest(&args),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(hint) = e.hint() {
                eprintln!("hint: {hint}");
            }
            e.exit_code()
        }
    }
}
