use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rainbow_cli::ablate::cmd_ablate;
use rainbow_cli::checks;
use rainbow_cli::config::ExperimentConfig;
use rainbow_cli::error::{CliError, Result};
use rainbow_cli::results::results_root;
use rainbow_cli::runs::{cmd_eval, cmd_gen_data, cmd_train};

/// Preference-optimization laboratory on a seeded toy policy.
#[derive(Parser)]
#[command(name = "rainbow", version, about)]
struct Cli {
    /// Override every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Parallel worker slots for grid runs.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a preference dataset plus its sidecar metadata.
    GenData {
        #[arg(long)]
        config: PathBuf,
        /// Dataset file to write (default: <results>/dataset.jsonl).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a policy on a dataset; writes per-epoch evaluation rows, a
    /// loss trace, checkpoints, and the final policy.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Final checkpoint path (default: <results>/policy.bin).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint (or the fresh reference) on a dataset.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run a greedy component-ablation grid.
    Ablate {
        /// Grid specification file.
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the full invariant-check suite.
    Check,
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = seed {
        cfg.override_seed(seed);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let results_dir = results_root();
    match cli.command {
        Command::GenData { config, out } => {
            let cfg = load_config(&config, cli.seed)?;
            let out = out.unwrap_or_else(|| results_dir.join("dataset.jsonl"));
            let meta = cmd_gen_data(&cfg, &out)?;
            println!(
                "wrote {} pairs ({} degenerate, provenance {}) to {}",
                meta.prompts,
                meta.degenerate_pairs,
                meta.provenance,
                out.display()
            );
        }
        Command::Train {
            config,
            dataset,
            out,
        } => {
            let cfg = load_config(&config, cli.seed)?;
            let out = out.unwrap_or_else(|| results_dir.join("policy.bin"));
            let outcome = cmd_train(&cfg, &dataset, &out, &results_dir)?;
            for row in &outcome.rows {
                println!(
                    "epoch {} loss {:.6} win_rate {:.4} accuracy {:.4} avg_len {:.2}",
                    row.epoch.unwrap_or(0),
                    row.train_loss.unwrap_or(f64::NAN),
                    row.win_rate.unwrap_or(f64::NAN),
                    row.pairwise_accuracy.unwrap_or(f64::NAN),
                    row.avg_length.unwrap_or(f64::NAN),
                );
            }
            println!("checkpoint written to {}", out.display());
        }
        Command::Eval {
            config,
            dataset,
            checkpoint,
        } => {
            let cfg = load_config(&config, cli.seed)?;
            let report = cmd_eval(&cfg, &dataset, checkpoint.as_deref(), &results_dir)?;
            println!(
                "win_rate {:.4} accuracy {:.4} (ties {}) avg_len {:.2} mean_reward {:.4}",
                report.win_rate,
                report.pairwise_accuracy,
                report.accuracy_ties,
                report.avg_length,
                report.mean_reward,
            );
        }
        Command::Ablate { config } => {
            let outcome = cmd_ablate(&config, cli.seed, cli.jobs, &results_dir)?;
            println!("{} runs across the grid", outcome.total_runs);
            for row in &outcome.summary {
                println!(
                    "{}\twin_rate {:.4}\taccuracy {:.4}\tavg_len {:.2}",
                    row.label,
                    row.win_rate.unwrap_or(f64::NAN),
                    row.pairwise_accuracy.unwrap_or(f64::NAN),
                    row.avg_length.unwrap_or(f64::NAN),
                );
            }
        }
        Command::Check => {
            let outcomes = checks::run_all();
            let mut failures = 0;
            for outcome in &outcomes {
                let tag = if outcome.passed { "PASS" } else { "FAIL" };
                println!("{tag} {}: {}", outcome.name, outcome.detail);
                if !outcome.passed {
                    failures += 1;
                }
            }
            println!("{} checks, {failures} failures", outcomes.len());
            if failures > 0 {
                return Err(CliError::Check(format!(
                    "{failures} invariant checks failed"
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
