//! `movimpute` command-line interface.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use movimpute::Error;

#[derive(Parser, Debug)]
#[command(name = "movimpute", version, about = "Process imputation for continuous-time movement models")]
pub struct Cli {
    /// Master seed (falls back to MI_SEED).
    #[arg(long, global = true, env = "MI_SEED")]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores; 1 runs everything sequentially).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a latent path and its telemetry.
    Simulate(SimulateArgs),
    /// Fit the time-varying attraction model to a telemetry CSV.
    Fit(FitArgs),
    /// Run a replicated simulation study (resumes from an existing checkpoint).
    Study(StudyArgs),
    /// Choose the basis prior variance by DIC over a grid.
    SelectTuning(TuningArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelArg {
    Sde1,
    Sde2,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the default configuration and exit.
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Telemetry CSV with header `time,x,y`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Args, Debug)]
pub struct StudyArgs {
    /// Study number.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub id: Option<u8>,
    /// Multiplier for grid sizes and chain lengths.
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Full study configuration (JSON); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fill the runtime column of summary.csv.
    #[arg(long)]
    pub record_runtime: bool,
    /// Stop after this many pending replicate jobs.
    #[arg(long)]
    pub max_jobs: Option<usize>,
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Args, Debug)]
pub struct TuningArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Candidate prior variances (default 10^(i/4), i = -16..12).
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long)]
    pub print_config: bool,
}

const EXIT_USAGE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numerical(_) | Error::NonConvergence { .. } => EXIT_NUMERICAL,
        _ => EXIT_VALIDATION,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        movimpute::parallel::set_threads(n);
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(EXIT_USAGE)
        }
        Err(commands::Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
