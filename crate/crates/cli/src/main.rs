use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fitts_bench::pipeline::{ExperimentConfig, Pipeline, StageOutcome, StageStatus, OUTPUT_ENV};
use fitts_bench::Result;

/// Fitts' law benchmark for behavior-cloned reaching policies.
#[derive(Debug, Parser)]
#[command(name = "bench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (TOML).
    #[arg(long, short, global = true, default_value = "bench.toml")]
    config: PathBuf,

    /// Override a config key, e.g. `--set policy.max_epochs=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic demonstrations and their manifest.
    Gen,
    /// Measure movement times of the demonstrations.
    Metrics,
    /// Train the behavior-cloning policy.
    Train,
    /// Roll the trained policy out against every demonstration.
    Rollout,
    /// Fit Fitts and ballistic models and write the report.
    Analyze,
    /// Run every stage, skipping those whose inputs are unchanged.
    All,
}

fn print_outcome(o: &StageOutcome) {
    let status = match o.status {
        StageStatus::Ran => "done",
        StageStatus::Cached => "cached",
    };
    println!("{:<8} {status}", o.stage);
}

fn run(cli: &Cli) -> Result<()> {
    let config = ExperimentConfig::load(&cli.config, &cli.overrides)?;
    let pipeline = Pipeline::new(config)?;
    let root = pipeline.root().display().to_string();
    log::info!("output root {root} (override with {OUTPUT_ENV})");
    match cli.command {
        Command::Gen => print_outcome(&pipeline.gen()?),
        Command::Metrics => print_outcome(&pipeline.metrics()?),
        Command::Train => {
            let h = pipeline.train()?;
            println!(
                "train    done ({} epochs, best {} with validation loss {:.3e})",
                h.stopped_epoch,
                h.best_epoch,
                h.best_val_loss()
            );
        }
        Command::Rollout => print_outcome(&pipeline.rollout()?),
        Command::Analyze => {
            let report = pipeline.analyze()?;
            for src in [&report.human, &report.policy].into_iter().flatten() {
                match &src.fitts {
                    Ok(f) => println!(
                        "{:<8} MT = {:.3} + {:.3} ID, R2 = {:.3}, n = {}",
                        src.source.to_string(),
                        f.a,
                        f.b,
                        f.r_squared,
                        f.n
                    ),
                    Err(e) => println!("{:<8} no fit: {e}", src.source.to_string()),
                }
            }
        }
        Command::All => {
            for o in pipeline.all()? {
                print_outcome(&o);
            }
        }
    }
    println!("report: {}", pipeline.report_dir().join("summary.md").display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
