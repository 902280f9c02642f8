//! Command-line front door: generate synthetic data, train and validate the
//! hierarchical classifier, attribute its predictions, and run the
//! forward-chaining forecast comparison — all reproducible from (files,
//! config, seed).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Wave;
use config::{load_file_config, RunConfig};

#[derive(Parser)]
#[command(
    name = "sesnet",
    version,
    about = "Hierarchical building-risk modeling, attribution, and forecasting"
)]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed recorded in every output.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (also the default location of input files).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted ground truth.
    Synth {
        /// Comma-separated district sizes, e.g. 189,117,39.
        #[arg(long)]
        districts: Option<String>,
        /// Risk noise scale (0 = deterministic counts).
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Train the classifier and save a checkpoint.
    Train {
        #[arg(long, value_enum, default_value = "resurgence")]
        wave: Wave,
        /// Case-count threshold for the binary label (default: 1 early, 105 resurgence).
        #[arg(long)]
        cutoff: Option<u32>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Checkpoint path (default <out>/model.ckpt).
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Stratified k-fold cross-validation.
    Cv {
        #[arg(long, value_enum, default_value = "resurgence")]
        wave: Wave,
        #[arg(long)]
        cutoff: Option<u32>,
        #[arg(long, default_value = "10")]
        folds: usize,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Search the cutoff grid by training AUC.
    Cutoff {
        #[arg(long, value_enum, default_value = "resurgence")]
        wave: Wave,
        /// Comma-separated candidate cutoffs (default 1,5,10,25,50,75,105,150).
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Shapley attribution from a trained checkpoint.
    Explain {
        /// Checkpoint path (default <out>/model.ckpt).
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        n_perm: Option<usize>,
    },
    /// Forward-chaining forecast validation, consuming shapley.csv.
    Chain {
        /// Comma-separated horizons (default 3,7,14).
        #[arg(long)]
        horizons: Option<String>,
        /// Attribution file (default <out>/shapley.csv).
        #[arg(long)]
        shapley: Option<PathBuf>,
        #[arg(long)]
        max_epochs: Option<usize>,
    },
}

fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> anyhow::Result<Vec<T>> {
    raw.split(',')
        .map(|part| {
            part.trim()
                .parse::<T>()
                .map_err(|_| anyhow::anyhow!("bad {what} entry `{part}`"))
        })
        .collect()
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(path) => Some(load_file_config(path)?),
        None => None,
    };
    let mut config = RunConfig::build(file, cli.seed, cli.out);

    match cli.command {
        Command::Synth { districts, noise } => {
            if let Some(raw) = districts {
                config.synth.district_sizes = parse_list(&raw, "district size")?;
            }
            if let Some(v) = noise {
                config.synth.noise_scale = v;
            }
            commands::cmd_synth(&config)
        }
        Command::Train {
            wave,
            cutoff,
            epochs,
            model,
        } => {
            if let Some(v) = epochs {
                config.mhhcnn.epochs = v;
            }
            commands::cmd_train(&config, wave, cutoff, model)
        }
        Command::Cv {
            wave,
            cutoff,
            folds,
            epochs,
        } => {
            if let Some(v) = epochs {
                config.mhhcnn.epochs = v;
            }
            commands::cmd_cv(&config, wave, cutoff, folds)
        }
        Command::Cutoff { wave, grid, epochs } => {
            if let Some(v) = epochs {
                config.mhhcnn.epochs = v;
            }
            let grid = grid.map(|raw| parse_list(&raw, "cutoff")).transpose()?;
            commands::cmd_cutoff(&config, wave, grid)
        }
        Command::Explain { model, n_perm } => {
            if let Some(v) = n_perm {
                config.shapley.n_permutations = v;
            }
            commands::cmd_explain(&config, model)
        }
        Command::Chain {
            horizons,
            shapley,
            max_epochs,
        } => {
            if let Some(v) = max_epochs {
                config.forecast.max_epochs = v;
            }
            let horizons = horizons.map(|raw| parse_list(&raw, "horizon")).transpose()?;
            commands::cmd_chain(&config, horizons, shapley)
        }
    }
}

/// Exit code 2 marks numerical failures (non-finite loss); everything else
/// that fails is a validation error (1).
fn classify_failure(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<sesnet::mhhcnn::MhhcnnError>() {
            if matches!(e, sesnet::mhhcnn::MhhcnnError::NonFinite { .. }) {
                return 2;
            }
        }
        if let Some(e) = cause.downcast_ref::<sesnet::forecast::ForecastError>() {
            if matches!(e, sesnet::forecast::ForecastError::NonFinite { .. }) {
                return 2;
            }
        }
        if let Some(e) = cause.downcast_ref::<sesnet::ndcore::NdError>() {
            if matches!(e, sesnet::ndcore::NdError::NonFinite { .. }) {
                return 2;
            }
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify_failure(&err))
        }
    }
}
