//! `twdetect`: config-driven bot-tweet detection experiments.
//!
//! Exit codes: 0 success, 1 internal error, 2 user or config error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use twdetect::eval::REPORT_SCHEMA_VERSION;
use twdetect::experiment::{
    self, Cause, DedupeMode, ExperimentConfig, ExperimentError, Stage, CONFIG_SCHEMA_VERSION, MANIFEST_SCHEMA_VERSION,
    TOOL_VERSION, VECTORIZER_SCHEMA_VERSION,
};
use twdetect::models::{ModelRegistry, MODEL_SCHEMA_VERSION};
use twdetect::synth::synth_csv;

#[derive(Parser, Debug)]
#[command(name = "twdetect", about = "Detect machine-generated tweets with classical models")]
struct Cli {
    /// Experiment config (JSON)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's output_dir
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Experiment seed; overrides the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Only log errors
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Dedupe {
    None,
    Exact,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Read the dataset CSV and write corpus.csv
    Ingest {
        #[arg(long, value_enum)]
        dedupe: Option<Dedupe>,
    },
    /// Split corpus.csv into TRAIN/VALID/TEST, writing split.csv
    Split,
    /// Fit preprocessing and features on TRAIN, writing vectorizer.json
    Featurize,
    /// Fit the model on TRAIN, writing model.json
    Train,
    /// Score TEST, writing report.json
    Eval,
    /// All stages plus manifest.json
    Run {
        #[arg(long, value_enum)]
        dedupe: Option<Dedupe>,
    },
    /// Leaderboard and heatmap from report files
    Compare {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        allow_mixed_splits: bool,
    },
    /// Write a synthetic labeled corpus in canonical CSV
    Synth {
        #[arg(long, short)]
        n: usize,
        /// Destination CSV
        #[arg(long, short)]
        output: PathBuf,
    },
}

fn version_text() -> String {
    format!(
        "{TOOL_VERSION} (config schema {CONFIG_SCHEMA_VERSION}, model schema {MODEL_SCHEMA_VERSION}, \
         vectorizer schema {VECTORIZER_SCHEMA_VERSION}, report schema {REPORT_SCHEMA_VERSION}, \
         manifest schema {MANIFEST_SCHEMA_VERSION})"
    )
}

fn usage(stage: Stage, msg: impl Into<String>) -> ExperimentError {
    ExperimentError::new(stage, Cause::Config(msg.into()))
}

fn load_config(cli: &Cli, dedupe: Option<Dedupe>) -> Result<ExperimentConfig, ExperimentError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| usage(Stage::Config, "--config is required for this command"))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.output_dir = dir.clone();
    }
    match dedupe {
        Some(Dedupe::None) => cfg.dedupe = DedupeMode::None,
        Some(Dedupe::Exact) => cfg.dedupe = DedupeMode::Exact,
        None => {}
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<(), ExperimentError> {
    let registry = ModelRegistry::with_builtin();
    match &cli.command {
        Command::Ingest { dedupe } => {
            let cfg = load_config(cli, *dedupe)?;
            experiment::step_ingest(&cfg, &cfg.output_dir)?;
        }
        Command::Split => {
            let cfg = load_config(cli, None)?;
            experiment::step_split(&cfg, &cfg.output_dir)?;
        }
        Command::Featurize => {
            let cfg = load_config(cli, None)?;
            experiment::step_featurize(&cfg, &cfg.output_dir)?;
        }
        Command::Train => {
            let cfg = load_config(cli, None)?;
            registry.get(&cfg.model.family).map_err(|e| ExperimentError::new(Stage::Config, e))?;
            experiment::step_train(&cfg, &registry, &cfg.output_dir)?;
        }
        Command::Eval => {
            let cfg = load_config(cli, None)?;
            experiment::step_eval(&cfg, &registry, &cfg.output_dir)?;
        }
        Command::Run { dedupe } => {
            let cfg = load_config(cli, *dedupe)?;
            let m = experiment::run_experiment(&cfg, &registry)?;
            log::info!("wrote {} artifacts to {}", m.artifacts.len(), cfg.output_dir.display());
        }
        Command::Compare {
            reports,
            allow_mixed_splits,
        } => {
            let out = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
            experiment::compare(reports, *allow_mixed_splits, &out)?;
        }
        Command::Synth { n, output } => {
            let csv = synth_csv(*n, cli.seed.unwrap_or(0)).map_err(|e| ExperimentError::new(Stage::Synth, e))?;
            if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|source| {
                    ExperimentError::new(
                        Stage::Synth,
                        Cause::Output {
                            path: dir.to_path_buf(),
                            source,
                        },
                    )
                })?;
            }
            std::fs::write(output, csv).map_err(|source| {
                ExperimentError::new(
                    Stage::Synth,
                    Cause::Output {
                        path: output.clone(),
                        source,
                    },
                )
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let version: &'static str = Box::leak(version_text().into_boxed_str());
    let matches = Cli::command().version(version).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
