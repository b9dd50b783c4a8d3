//! `liouvtomo`: theory tables, simulated homodyne datasets, reconstructions and
//! comparisons for phase-insensitive device tomography.

mod commands;
mod dataset;

use clap::{Args, Parser, Subcommand};
use liouvtomo::Error;
use std::path::PathBuf;
use std::process::ExitCode;

/// Exit codes: 0 ok, 1 i/o, 2 config error, 3 incomplete data, 4 numerical failure.
pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_INCOMPLETE: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "liouvtomo", version, about = "Liouvillian tomography of phase-insensitive devices")]
struct Cli {
    /// Worker threads (default: config `workers`, then all cores). Outputs do not depend on it.
    #[arg(long, global = true, env = "LIOUVTOMO_WORKERS")]
    workers: Option<usize>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (default: config `output_dir`, then the current directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Lift the desk-scale caps on samples and trajectories.
    #[arg(long)]
    pub paper_scale: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Theoretical Green matrix and Liouvillian of the configured device.
    Theory {
        #[command(flatten)]
        common: Common,
        /// For a laser device, also write the ODE and quantum-jump variants side by side.
        #[arg(long)]
        laser_variants: bool,
    },
    /// Simulate the homodyne experiment and write one estimate file per outcome.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write the raw quadratures to raw.csv.
        #[arg(long)]
        raw: bool,
    },
    /// Reconstruct Ĝ and L̂ from a dataset directory written by `simulate`.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Directory holding outcome_NN.json files or raw.csv.
        #[arg(long)]
        data: PathBuf,
    },
    /// Summarize a report against its theory, or against an explicit L CSV.
    Compare {
        /// report.json from `reconstruct`.
        #[arg(long)]
        report: PathBuf,
        /// Theory Liouvillian CSV; defaults to the one embedded in the report.
        #[arg(long)]
        theory: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate pattern functions f_n(x) for plotting.
    Patterns {
        #[arg(long, default_value_t = 10)]
        n_max: usize,
        /// Grid covers [-x_max, x_max].
        #[arg(long, default_value_t = 6.0)]
        x_max: f64,
        #[arg(long, default_value_t = 241)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidInput(_) | Error::Json(_) | Error::Parse(_) | Error::EfficiencyThreshold { .. } => EXIT_CONFIG,
            Error::IncompleteData { .. } => EXIT_INCOMPLETE,
            Error::BranchFailure { .. } | Error::Integration { .. } | Error::Internal(_) => EXIT_NUMERICAL,
            Error::Io(_) => EXIT_IO,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self { code: EXIT_IO, message: format!("i/o error: {e}") }
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

    let workers = cli.workers;
    let result = match cli.command {
        Command::Theory { common, laser_variants } => commands::theory(&common, workers, laser_variants),
        Command::Simulate { common, raw } => commands::simulate(&common, workers, raw),
        Command::Reconstruct { common, data } => commands::reconstruct(&common, workers, &data),
        Command::Compare { report, theory, out } => commands::compare(&report, theory.as_deref(), out.as_deref()),
        Command::Patterns { n_max, x_max, points, out } => commands::patterns(n_max, x_max, points, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
