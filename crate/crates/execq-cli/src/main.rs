//! `execq`: train, evaluate and inspect Double-DQN execution policies.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use execq_cli::commands;
use execq_cli::config::RunConfig;
use execq_cli::CliError;

#[derive(Parser)]
#[command(
    name = "execq",
    version,
    about = "Double-DQN optimal execution: training, TWAP benchmarking and policy maps"
)]
struct Cli {
    /// Plain-text key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Run directory for all artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Feature set override (ti, tip, tipqv).
    #[arg(long, global = true)]
    features: Option<String>,

    /// Repeatable key=value config override.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train and train a policy; writes checkpoints, the training log
    /// and the resolved-config snapshot.
    Train,
    /// Evaluate a checkpoint against TWAP on the eval split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Export greedy-action heatmap grids for a checkpoint.
    PolicyMap {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Generate a synthetic midprice CSV.
    SynthGen {
        /// Number of one-second points (defaults to one window).
        #[arg(long)]
        length: Option<usize>,
    },
}

fn build_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    for pair in &cli.set {
        cfg.apply_set(pair)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(features) = &cli.features {
        cfg.apply("features", features)?;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = build_config(cli)?;
    match &cli.command {
        Command::Train => {
            let artifacts = commands::run_train(&cfg)?;
            println!("wrote {}", artifacts.checkpoint.display());
            println!("wrote {}", artifacts.training_log.display());
            println!("wrote {}", artifacts.resolved_config.display());
        }
        Command::Eval { checkpoint } => {
            let artifacts = commands::run_eval(&cfg, checkpoint)?;
            println!("wrote {}", artifacts.summary_json.display());
            println!("wrote {}", artifacts.per_hour_csv.display());
            println!("wrote {}", artifacts.histogram_csv.display());
        }
        Command::PolicyMap { checkpoint } => {
            for path in commands::run_policy_map(&cfg, checkpoint)? {
                println!("wrote {}", path.display());
            }
        }
        Command::SynthGen { length } => {
            let path = commands::run_synth_gen(&cfg, *length)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EXECQ_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
