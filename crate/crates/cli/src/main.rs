use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use dagcd_cli::commands::{self, AblationAxis};
use dagcd_cli::config::ExperimentConfig;
use dagcd_cli::exit_code;

#[derive(Parser)]
#[command(
    name = "dagcd",
    version,
    about = "Long-tailed generalized category discovery experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; defaults are used for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the training split and print per-class counts.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one seed; writes telemetry and checkpoints under OUT/seed-N.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score trained checkpoints; repeat --seed for several runs.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, required = true)]
        seed: Vec<u64>,
        /// Checkpoint to score instead of OUT/seed-N/checkpoint.json.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run one distribution-estimation round and compare it with the truth.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        /// Use this checkpoint's encoder features instead of raw inputs.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train and score a grid along one ablation axis.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: AblationAxis,
        /// Seeds to average over (default: `eval.seeds` from the config).
        #[arg(long)]
        seed: Vec<u64>,
    },
}

fn load(common: &Common, seed: Option<u64>) -> Result<ExperimentConfig> {
    ExperimentConfig::load(common.config.as_deref())?.resolve(seed, common.out.as_deref())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { common, seed } => {
            let cfg = load(&common, seed)?;
            print!("{}", commands::cmd_gen_data(&cfg)?);
        }
        Command::Train {
            common,
            seed,
            resume,
        } => {
            let cfg = load(&common, Some(seed))?;
            let outcome = commands::cmd_train(&cfg, resume.as_deref())?;
            println!(
                "trained {} epochs -> {}",
                outcome.telemetry.len(),
                outcome.dir.display()
            );
        }
        Command::Eval {
            common,
            seed,
            checkpoint,
        } => {
            let cfg = load(&common, None)?;
            let file = commands::cmd_eval(&cfg, &seed, checkpoint.as_deref())?;
            print!("{}", commands::aggregate_csv(&file.aggregate));
        }
        Command::Estimate {
            common,
            seed,
            checkpoint,
        } => {
            let cfg = load(&common, seed)?;
            let file = commands::cmd_estimate(&cfg, checkpoint.as_deref())?;
            println!("pi_e = {:?}", file.record.pi_e.freq);
            if let Some(err) = file.l1_error {
                println!("L1 error vs truth = {err:.4}");
            }
        }
        Command::Ablate { common, axis, seed } => {
            let cfg = load(&common, None)?;
            let seeds = if seed.is_empty() {
                cfg.eval.seeds.clone()
            } else {
                seed
            };
            let file = commands::cmd_ablate(&cfg, axis, &seeds)?;
            print!("{}", commands::ablation_csv(&file.rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
