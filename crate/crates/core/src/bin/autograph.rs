use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use autograph::graph::DatasetMeta;
use autograph::harness::{
    generate_sbm, ingest, leaderboard, replay, score, write_report, SbmParams, Solution,
};
use autograph::search::{SearchOptions, TrialConfig};
use autograph::{Error, Result};

#[derive(Parser)]
#[command(name = "autograph", version, about = "Automated graph learning for node classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a solution on a dataset and write predictions.
    Run {
        #[arg(long)]
        dataset: PathBuf,
        /// baseline_gcn2, gcn4, autograph or f2gcn.
        #[arg(long, default_value = "autograph")]
        solution: String,
        /// Seconds; defaults to the dataset's time_budget_seconds.
        #[arg(long)]
        budget: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Retrain the single trial configuration in this JSON file.
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Print the selected topology as JSON.
        #[arg(long)]
        emit_topology: bool,
        #[arg(long)]
        max_trials: Option<usize>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = 0.2)]
        val_fraction: f64,
    },
    /// Score a prediction file against the truth.
    Score {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_classes: Option<usize>,
    },
    /// Aggregate scores.json files into a CSV table.
    Leaderboard {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset.
    GenSynth {
        #[arg(long, value_enum, default_value = "sbm")]
        kind: SynthKind,
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        p_in: f64,
        #[arg(long)]
        p_out: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.2)]
        train_fraction: f64,
        #[arg(long, default_value_t = 1.0)]
        feature_noise: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    Sbm,
}

fn dataset_budget(dir: &Path) -> Result<f64> {
    let path = dir.join("meta.json");
    let text = fs::read_to_string(&path).map_err(|source| Error::Load { path, source })?;
    let meta: DatasetMeta = serde_json::from_str(&text)?;
    Ok(meta.time_budget_seconds)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            dataset,
            solution,
            budget,
            seed,
            out,
            replay: replay_path,
            emit_topology,
            max_trials,
            workers,
            val_fraction,
        } => {
            let budget = match budget {
                Some(b) => b,
                None => dataset_budget(&dataset)?,
            };
            if !(budget.is_finite() && budget >= 0.0) {
                return Err(Error::Usage(format!("budget must be a non-negative number, got {budget}")));
            }
            let opts = SearchOptions {
                seed,
                workers: workers.max(1),
                max_trials,
                val_fraction,
                ..SearchOptions::default()
            };
            let report = match replay_path {
                Some(p) => {
                    let text = fs::read_to_string(&p).map_err(|source| Error::Load { path: p, source })?;
                    let config: TrialConfig = serde_json::from_str(&text)?;
                    replay(&dataset, &config, budget, &opts, &out)?
                }
                None => {
                    let solution: Solution = solution.parse()?;
                    ingest(&dataset, solution, budget, &opts, &out)?
                }
            };
            if emit_topology {
                match &report.topology {
                    Some(t) => println!("{}", serde_json::to_string_pretty(t)?),
                    None => log::warn!("this solution selects no topology"),
                }
            }
            log::info!(
                "{} predictions in {:.2}s{}",
                report.predictions.len(),
                report.meta.wall_seconds,
                if report.meta.fallback { " (majority-class fallback)" } else { "" }
            );
        }
        Command::Score {
            pred,
            truth,
            out,
            n_classes,
        } => {
            let report = score(&pred, &truth, n_classes)?;
            write_report(&report, &out)?;
            println!(
                "accuracy {:.4} balanced_accuracy {:.4}",
                report.accuracy, report.balanced_accuracy
            );
        }
        Command::Leaderboard { results, out } => {
            fs::write(&out, leaderboard(&results)?)?;
        }
        Command::GenSynth {
            kind: SynthKind::Sbm,
            nodes,
            classes,
            p_in,
            p_out,
            seed,
            train_fraction,
            feature_noise,
            out,
        } => {
            let params = SbmParams {
                train_fraction,
                feature_noise,
                ..SbmParams::new(nodes, classes, p_in, p_out, seed)
            };
            generate_sbm(&params)?.save(&out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
