mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

/// Forecasting pipeline for monthly malaria prevalence.
#[derive(Debug, Parser)]
#[command(name = "lemps", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic monthly dataset from a JSON spec.
    Synth {
        /// JSON generator spec.
        #[arg(long)]
        config: PathBuf,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeated hold-out comparison of estimators over lag tasks.
    Select {
        #[command(flatten)]
        common: HoldoutArgs,
        /// Lag depths, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6")]
        tasks: Vec<usize>,
        /// Estimator names, comma separated. Defaults to the nine-way comparison.
        #[arg(long, value_delimiter = ',')]
        estimators: Vec<String>,
    },
    /// Tune the elastic net (alpha and l1 ratio) for every lag task.
    TuneEn {
        #[command(flatten)]
        common: HoldoutArgs,
    },
    /// Train the final forecasters and score the validation years.
    Validate {
        #[arg(long)]
        data: PathBuf,
        /// Last training month; overrides the boundary stored in the config.
        #[arg(long)]
        boundary: Option<String>,
        /// Config JSON or a tune-en output.
        #[arg(long)]
        config: PathBuf,
        /// Report JSON.
        #[arg(long)]
        out: PathBuf,
        /// Flat per-prediction CSV. Defaults to the report path with a .csv extension.
        #[arg(long)]
        out_csv: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct HoldoutArgs {
    #[arg(long)]
    data: PathBuf,
    /// Last training month, YYYY-MM.
    #[arg(long)]
    boundary: String,
    #[arg(long, default_value_t = 1000)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, malformed inputs, or data the pipeline cannot use.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Internal(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Internal(_) => "internal",
        }
    }
}

impl From<lemps_core::Error> for CliError {
    fn from(e: lemps_core::Error) -> Self {
        use lemps_core::Error as E;
        match e {
            E::Parameter(_)
            | E::Schema { .. }
            | E::Continuity { .. }
            | E::Validation { .. }
            | E::Parse { .. }
            | E::InsufficientData(_)
            | E::Range(_)
            | E::Csv(_)
            | E::Json(_) => CliError::Usage(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

fn report(err: &CliError) {
    let line = serde_json::json!({
        "error": err.kind(),
        "exit": err.exit_code(),
        "message": err.to_string(),
    });
    eprintln!("{line}");
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("LEMPS_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| {
        CliError::Usage(format!(
            "LEMPS_THREADS must be a non-negative integer, got '{raw}'"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Internal(format!("thread pool: {e}")))
}

fn run(cli: Cli, argv: Vec<String>) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Synth { config, out } => commands::synth(&config, &out, argv),
        Command::Select {
            common,
            tasks,
            estimators,
        } => commands::select(&common.into(), &tasks, &estimators, argv),
        Command::TuneEn { common } => commands::tune_en(&common.into(), argv),
        Command::Validate {
            data,
            boundary,
            config,
            out,
            out_csv,
        } => {
            let out_csv = out_csv.unwrap_or_else(|| out.with_extension("csv"));
            commands::validate(&data, boundary.as_deref(), &config, &out, &out_csv, argv)
        }
    }
}

impl From<HoldoutArgs> for commands::Holdout {
    fn from(a: HoldoutArgs) -> Self {
        commands::Holdout {
            data: a.data,
            boundary: a.boundary,
            repeats: a.repeats,
            seed: a.seed,
            out: a.out,
        }
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Usage(e.render().to_string().trim_end().to_string());
            report(&err);
            return ExitCode::from(err.exit_code());
        }
    };
    match run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            report(&err);
            ExitCode::from(err.exit_code())
        }
    }
}
