//! `mass` — run multi-agent simulations, backtests, sweeps and reports.

mod commands;
mod report;
mod svg;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "mass", version, about = "Multi-agent market simulation for portfolio construction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Run store or output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set anneal.seed=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct RunFlags {
    /// Stop after this many newly simulated days.
    #[arg(long)]
    pub max_days: Option<usize>,
    /// Write per-day optimizer traces.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Start a simulation, or continue one whose store matches the configuration.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Continue a stored simulation from its last completed day.
    Resume {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Backtest the signals of a run store.
    Backtest {
        #[command(flatten)]
        common: Common,
    },
    /// Factor metrics, backtest summary and plot data for a run store.
    Report {
        #[command(flatten)]
        common: Common,
    },
    /// One run per agent count.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated totals (`64`) or `TYPESxINSTANCES` (`4x16`).
        #[arg(long, default_value = "16,32,64,128,256,512")]
        counts: String,
        /// Most agent types a bare total is split over; defaults to `n_type`.
        #[arg(long)]
        max_types: Option<usize>,
    },
    /// Load a dataset and report what was found.
    ValidateData {
        #[command(flatten)]
        common: Common,
        /// Dataset directory; overrides the configuration and MASS_DATA_DIR.
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
    },
}

/// Failure classes and their exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, configuration or inputs.
    User(String),
    /// Anything that went wrong while working.
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::User(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

impl From<mass_core::Error> for Failure {
    fn from(e: mass_core::Error) -> Self {
        use mass_core::Error::*;
        match e {
            Config(_) | ConfigMismatch { .. } | MissingFile(_) | Parse { .. } | Calendar(_) => Failure::User(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, record| writeln!(buf, "{}", record.args()))
        .init();

    let result = match cli.command {
        Command::Run { common, flags } => commands::run(&common, &flags, false),
        Command::Resume { common, flags } => commands::run(&common, &flags, true),
        Command::Backtest { common } => commands::backtest(&common),
        Command::Report { common } => report::report(&common),
        Command::Sweep { common, counts, max_types } => commands::sweep(&common, &counts, max_types),
        Command::ValidateData { common, data } => commands::validate_data(&common, data.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::User(msg) | Failure::Runtime(msg)) = &f;
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}
