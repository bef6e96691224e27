//! `twotier`: synthesise, ingest, tune, train, simulate and evaluate two-tier
//! solar generation forecasts from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(
    name = "twotier",
    version,
    about = "Two-tier day-ahead solar forecasting with real-time correction"
)]
struct Cli {
    /// Configuration file of `key = value` lines; may be repeated, later files win.
    #[arg(long = "config", global = true, value_name = "PATH")]
    configs: Vec<PathBuf>,

    /// Override one configuration key; applied after all config files.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,

    /// Seed for the synthetic generator and network initialisation.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the effective configuration as a config file.
    Config,
    /// Generate a seeded synthetic dataset.
    Synth {
        /// Number of days; overrides `synth_days`.
        #[arg(long)]
        days: Option<usize>,
        /// Output CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Label sidecar; defaults to `<out>.labels.csv` when `--out` is given.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Validate a CSV and report its shape, optionally re-exporting it.
    Ingest {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid-search k-NN depth/neighbours and NN hidden units on the tuning days.
    Tune {
        #[command(flatten)]
        data: DataArg,
        /// Directory for tune_knn.csv, tune_nn.csv and tuned.conf.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Fit both global-tier models on the training days.
    Train {
        #[command(flatten)]
        data: DataArg,
        /// Model directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, conflicts_with = "nn_only")]
        knn_only: bool,
        #[arg(long)]
        nn_only: bool,
    },
    /// Replay one day with the real-time correction and write per-sample traces.
    Simulate {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, default_value = ".")]
        models: PathBuf,
        /// Day to replay, `YYYY-MM-DD`.
        #[arg(long)]
        day: NaiveDate,
        /// Directory for the trace CSVs.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Score all four methods over the test days.
    Evaluate {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, default_value = ".")]
        models: PathBuf,
        /// Directory for per_day.csv and summary.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct DataArg {
    /// Input CSV with header `timestamp,power_w`.
    #[arg(long)]
    data: PathBuf,
}

/// A failed command: message for standard error and the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_INSUFFICIENT_DATA: u8 = 4;
pub const EXIT_UNKNOWN_DATE: u8 = 5;

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_IO,
            message: format!("{}: {err}", path.display()),
        }
    }
}

impl From<twotier::Error> for Failure {
    fn from(err: twotier::Error) -> Self {
        use twotier::Error as E;
        let code = match &err {
            e if e.is_insufficient_data() => EXIT_INSUFFICIENT_DATA,
            E::UnknownDate(_) => EXIT_UNKNOWN_DATE,
            E::InvalidConfig(_)
            | E::InvalidRatios(_)
            | E::InvalidGrid(_)
            | E::Underdetermined { .. } => EXIT_USAGE,
            E::Io(_)
            | E::MalformedRow { .. }
            | E::GridMisalignment { .. }
            | E::IncompleteDay { .. }
            | E::NegativePower { .. }
            | E::InvalidSeries(_)
            | E::Parse { .. }
            | E::ChecksumMismatch { .. }
            | E::UnsupportedVersion(_)
            | E::InvariantViolation(_)
            | E::GridMismatch
            | E::DimensionMismatch { .. } => EXIT_IO,
            _ => 1,
        };
        Self {
            code,
            message: err.to_string(),
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut config = RunConfig::default();
    for path in &cli.configs {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        config
            .apply_text(&text, &path.display().to_string())
            .map_err(Failure::usage)?;
    }
    for assignment in &cli.sets {
        config
            .apply_assignment(assignment)
            .map_err(Failure::usage)?;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut config = load_config(&cli)?;
    match cli.command {
        Command::Config => {
            print!("{}", config.to_documented_text());
            Ok(())
        }
        Command::Synth { days, out, labels } => {
            if let Some(days) = days {
                config.synth_days = days;
            }
            commands::synth(&config, out.as_deref(), labels.as_deref())
        }
        Command::Ingest { data, out } => commands::ingest(&config, &data.data, out.as_deref()),
        Command::Tune { data, out } => commands::tune(&config, &data.data, &out),
        Command::Train {
            data,
            out,
            knn_only,
            nn_only,
        } => commands::train(&config, &data.data, &out, !nn_only, !knn_only),
        Command::Simulate {
            data,
            models,
            day,
            out,
        } => commands::simulate(&config, &data.data, &models, day, &out),
        Command::Evaluate { data, models, out } => {
            commands::evaluate(&config, &data.data, &models, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("twotier: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
