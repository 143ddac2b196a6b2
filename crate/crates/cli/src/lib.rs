//! Command-line front end: config loading, stage drivers and exit codes.

pub mod config;
pub mod pipeline;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{LoadedConfig, Overrides, SimulationFile};
use pipeline::{Pipeline, Stage};

/// Environment variable that sizes the worker pool.
pub const THREADS_ENV: &str = "QUASICAUSE_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: quasicause_core::Error,
    },
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "quasicause",
    version,
    about = "Causal effects of daily behavior on stress from passive sensing"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every stage and all configured studies.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Report estimates even when matching stays unbalanced.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate a synthetic cohort with known ground truth.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a single stage from the artifacts of the previous one.
    Stage {
        #[arg(value_enum)]
        stage: Stage,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check a dataset and print per-user coverage as JSON.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Sizes the global pool from the environment. Later calls are no-ops.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Run {
            config,
            force,
            seed,
            output,
        } => {
            let cfg = LoadedConfig::load(
                &config,
                &Overrides {
                    seed,
                    output_dir: output,
                    force,
                },
            )?;
            let report = Pipeline::new(cfg).run()?;
            let refused = report
                .studies
                .iter()
                .filter(|s| s.status == pipeline::StudyStatus::Refused)
                .count();
            log::info!("{} studies, {refused} refused", report.studies.len());
        }
        Command::Simulate { config, seed, output } => {
            let (file, out) = SimulationFile::load(&config, seed, output)?;
            pipeline::simulate(&file, &out)?;
        }
        Command::Stage { stage, config, output } => {
            let overrides = Overrides {
                output_dir: output,
                ..Overrides::default()
            };
            Pipeline::new(LoadedConfig::load(&config, &overrides)?).stage(stage)?;
        }
        Command::Validate { config } => {
            let report = Pipeline::new(LoadedConfig::load(&config, &Overrides::default())?).validate()?;
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            // a closed pipe (e.g. `| head`) is not an error
            let _ = writeln!(std::io::stdout().lock(), "{text}");
        }
    }
    Ok(())
}
