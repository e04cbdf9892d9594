use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use coop_maddpg::maddpg::evaluate;
use coop_maddpg_harness::config::CONFIG_REFERENCE;
use coop_maddpg_harness::experiment::resume_experiment;
use coop_maddpg_harness::{
    compare, emit_plots, load_checkpoint, run_experiment, ExperimentConfig,
};

/// Cooperative MADDPG on a predator-prey particle world.
#[derive(Debug, Parser)]
#[command(name = "coop-maddpg", version, after_long_help = CONFIG_REFERENCE)]
struct Cli {
    /// TOML experiment config (see below); defaults are used when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Run a single seed instead of the config's `seeds` list.
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,
    /// Output directory, overriding `output_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one run per seed, writing metrics_<seed>.csv, checkpoints and manifest.txt.
    Train {
        /// Override `train.episodes`.
        #[arg(long)]
        episodes: Option<usize>,
        /// Continue from a checkpoint; its stored config is used unless --config is given.
        #[arg(long, value_name = "CKPT")]
        resume: Option<PathBuf>,
        /// Train without the cooperation bonus.
        #[arg(long)]
        no_bonus: bool,
    },
    /// Greedy evaluation of a checkpoint's actors.
    Eval {
        #[arg(long, value_name = "CKPT")]
        checkpoint: PathBuf,
        /// Number of evaluation episodes.
        #[arg(long, default_value_t = 100)]
        episodes: usize,
    },
    /// Train a baseline and a bonus variant on the same seeds and report the difference.
    ///
    /// Without --baseline, the baseline is the --config experiment with the bonus disabled.
    Compare {
        #[arg(long, value_name = "PATH")]
        baseline: Option<PathBuf>,
        /// Variant config; defaults to --config.
        #[arg(long, value_name = "PATH")]
        variant: Option<PathBuf>,
    },
    /// Render SVG reward curves from metrics CSVs.
    Plot {
        /// Moving-average window; defaults to `smoothing_window`.
        #[arg(long)]
        window: Option<usize>,
        #[arg(required = true, value_name = "CSV")]
        csv: Vec<PathBuf>,
    },
}

fn load(path: Option<&Path>) -> Result<ExperimentConfig> {
    Ok(match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    })
}

fn apply_globals(cli: &Cli, cfg: &mut ExperimentConfig) {
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
}

fn fmt_means(names: &[String], means: &[f64]) -> String {
    names
        .iter()
        .zip(means)
        .map(|(n, m)| format!("{n}={m:.4}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Train {
            episodes,
            resume,
            no_bonus,
        } => {
            let ckpt = match resume {
                Some(path) => Some(load_checkpoint(path)?),
                None => None,
            };
            let mut cfg = match (&cli.config, &ckpt) {
                (None, Some(c)) => c.experiment.clone(),
                (path, _) => load(path.as_deref())?,
            };
            apply_globals(cli, &mut cfg);
            if let Some(n) = episodes {
                cfg.train.episodes = *n;
            }
            if *no_bonus {
                cfg.train.bonus_enabled = false;
            }
            cfg.validate()?;
            match resume {
                Some(path) => {
                    let run = resume_experiment(&cfg, path)?;
                    println!("seed {}: {}", run.seed, run.metrics.display());
                }
                None => {
                    for run in run_experiment(&cfg)? {
                        println!("seed {}: {}", run.seed, run.metrics.display());
                    }
                }
            }
            println!("manifest: {}", cfg.output_dir.join("manifest.txt").display());
        }
        Command::Eval {
            checkpoint,
            episodes,
        } => {
            let ckpt = load_checkpoint(checkpoint)?;
            let world = &ckpt.snapshot.world;
            let seed = cli.seed.unwrap_or(ckpt.run_seed);
            let report = evaluate(&ckpt.snapshot.learners, world, *episodes, seed)?;
            println!(
                "{} after {} episodes, {episodes} greedy episodes, seed {seed}",
                checkpoint.display(),
                ckpt.snapshot.episodes_done
            );
            println!("{}", fmt_means(&world.agent_names(), &report.agent_means));
            println!(
                "red_team={:.4} green_team={:.4} total={:.4}",
                report.red_mean, report.green_mean, report.total_mean
            );
        }
        Command::Compare { baseline, variant } => {
            let variant_path = variant.as_deref().or(cli.config.as_deref());
            let mut var = load(variant_path)?;
            let mut base = match baseline {
                Some(p) => load(Some(p))?,
                None => ExperimentConfig {
                    train: coop_maddpg::maddpg::TrainConfig {
                        bonus_enabled: false,
                        ..var.train.clone()
                    },
                    ..var.clone()
                },
            };
            apply_globals(cli, &mut base);
            apply_globals(cli, &mut var);
            let out = cli.out.clone().unwrap_or_else(|| var.output_dir.clone());
            let report = compare(&base, &var, &out)?;
            print!("{}", report.render());
            println!("report: {}", out.join("report.txt").display());
        }
        Command::Plot { window, csv } => {
            let cfg = load(cli.config.as_deref())?;
            let window = window.unwrap_or(cfg.smoothing_window);
            anyhow::ensure!(window >= 1, "--window must be at least 1");
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("plots"));
            for path in emit_plots(csv, window, &out)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
