use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use coop_maddpg::maddpg::{evaluate, Trainer, TrainConfig};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::config::ExperimentConfig;
use crate::metrics::{append_eval_row, MetricsTable, MetricsWriter};
use crate::{io_err, HarnessError, Result};

pub const MANIFEST: &str = "manifest.txt";

pub fn metrics_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("metrics_{seed}.csv"))
}

pub fn eval_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("eval_{seed}.csv"))
}

pub fn checkpoint_path(dir: &Path, seed: u64, episode: usize) -> PathBuf {
    dir.join(format!("checkpoint_{seed}_ep{episode:06}.ckpt"))
}

pub fn final_checkpoint_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("checkpoint_{seed}_final.ckpt"))
}

/// Files produced by one seed's run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub seed: u64,
    pub metrics: PathBuf,
    pub eval: Option<PathBuf>,
    pub checkpoints: Vec<PathBuf>,
    pub final_checkpoint: Option<PathBuf>,
}

/// Creates the output directory and proves it is writable.
pub fn prepare_output(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let probe = dir.join(".write_probe");
    std::fs::write(&probe, b"").map_err(io_err(dir))?;
    std::fs::remove_file(&probe).map_err(io_err(&probe))
}

fn eval_seed(seed: u64, episode: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ episode as u64
}

/// Trains one seed to `config.train.episodes`, optionally continuing from a checkpoint.
pub fn run_seed(
    config: &ExperimentConfig,
    seed: u64,
    resume: Option<Checkpoint>,
) -> Result<RunArtifacts> {
    let dir = &config.output_dir;
    let agent_names = config.world.agent_names();
    let metrics = metrics_path(dir, seed);
    let eval_csv = eval_path(dir, seed);

    let (mut trainer, mut writer) = match resume {
        Some(mut ckpt) => {
            let done = ckpt.snapshot.episodes_done;
            let wanted = config.train_for_seed(seed);
            let stored = TrainConfig {
                episodes: wanted.episodes,
                ..ckpt.snapshot.train.clone()
            };
            if stored != wanted || ckpt.snapshot.world != config.world {
                return Err(HarnessError::Checkpoint(
                    "resuming requires the checkpoint's world and training settings; only the episode count may change".into(),
                ));
            }
            ckpt.snapshot.train = stored;
            let trainer = Trainer::restore(ckpt.snapshot)?;
            (trainer, MetricsWriter::resume(&metrics, &agent_names, done)?)
        }
        None => {
            if eval_csv.exists() {
                std::fs::remove_file(&eval_csv).map_err(io_err(&eval_csv))?;
            }
            (
                Trainer::new(config.train_for_seed(seed), config.world.clone())?,
                MetricsWriter::create(&metrics, &agent_names)?,
            )
        }
    };

    let mut checkpoints = Vec::new();
    let save = |trainer: &Trainer, path: &Path| -> Result<()> {
        save_checkpoint(
            &Checkpoint {
                experiment: config.clone(),
                run_seed: seed,
                snapshot: trainer.snapshot(&config.world),
            },
            path,
        )
    };
    while trainer.episodes_done() < config.train.episodes {
        let started = Instant::now();
        let mut row = trainer.run_episode()?;
        if config.wall_clock {
            row.wall_ms = started.elapsed().as_millis() as u64;
        }
        writer.write(&row)?;
        let done = trainer.episodes_done();
        if config.eval_every > 0 && done % config.eval_every == 0 {
            let report = evaluate(
                trainer.learners(),
                trainer.world().config(),
                config.eval_episodes,
                eval_seed(seed, done),
            )?;
            append_eval_row(&eval_csv, &agent_names, done, &report)?;
        }
        if config.checkpoints && config.checkpoint_every > 0 && done % config.checkpoint_every == 0 {
            writer.flush()?;
            let path = checkpoint_path(dir, seed, done);
            save(&trainer, &path)?;
            checkpoints.push(path);
        }
    }
    writer.flush()?;
    let final_checkpoint = config.checkpoints.then(|| final_checkpoint_path(dir, seed));
    if let Some(path) = &final_checkpoint {
        save(&trainer, path)?;
    }
    Ok(RunArtifacts {
        seed,
        metrics,
        eval: eval_csv.exists().then_some(eval_csv),
        checkpoints,
        final_checkpoint,
    })
}

/// Hashes every regular file in `dir` except the manifest itself into `manifest.txt`.
pub fn write_manifest(dir: &Path) -> Result<PathBuf> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n != MANIFEST)
        .collect();
    names.sort();
    let mut text = String::new();
    for name in names {
        let path = dir.join(&name);
        let bytes = std::fs::read(&path).map_err(io_err(&path))?;
        writeln!(text, "{}  {name}", hex(&Sha256::digest(&bytes))).expect("string write");
    }
    let path = dir.join(MANIFEST);
    std::fs::write(&path, text).map_err(io_err(&path))?;
    Ok(path)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Checks `manifest.txt` against the files it lists; returns the names that differ.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut bad = Vec::new();
    for line in text.lines() {
        let Some((digest, name)) = line.split_once("  ") else {
            bad.push(line.to_string());
            continue;
        };
        let file = dir.join(name);
        match std::fs::read(&file) {
            Ok(bytes) if hex(&Sha256::digest(&bytes)) == digest => {}
            _ => bad.push(name.to_string()),
        }
    }
    Ok(bad)
}

/// Runs every seed, writes the config echo and the manifest.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunArtifacts>> {
    config.validate()?;
    prepare_output(&config.output_dir)?;
    let echo = config.output_dir.join("config.toml");
    std::fs::write(&echo, config.to_toml()).map_err(io_err(&echo))?;
    let runs = config
        .seeds
        .par_iter()
        .map(|&seed| run_seed(config, seed, None))
        .collect::<Result<Vec<_>>>()?;
    write_manifest(&config.output_dir)?;
    Ok(runs)
}

/// Continues a run from a checkpoint into `config.output_dir`.
pub fn resume_experiment(config: &ExperimentConfig, checkpoint: &Path) -> Result<RunArtifacts> {
    let ckpt = load_checkpoint(checkpoint)?;
    prepare_output(&config.output_dir)?;
    let seed = ckpt.run_seed;
    let out = run_seed(config, seed, Some(ckpt))?;
    write_manifest(&config.output_dir)?;
    Ok(out)
}

fn without_bonus(train: &TrainConfig) -> TrainConfig {
    TrainConfig {
        bonus_enabled: false,
        bonus_red: true,
        bonus_green: true,
        cooperation_threshold: 0,
        cooperation_factor: 1.0,
        ..train.clone()
    }
}

/// Refuses comparisons whose arms differ in anything but the cooperation bonus.
pub fn check_comparable(baseline: &ExperimentConfig, variant: &ExperimentConfig) -> Result<()> {
    if baseline.seeds != variant.seeds {
        return Err(HarnessError::Confound(format!(
            "baseline and variant must use the same seeds (baseline {:?}, variant {:?})",
            baseline.seeds, variant.seeds
        )));
    }
    if baseline.world != variant.world {
        return Err(HarnessError::Confound(
            "baseline and variant must use the same world configuration".into(),
        ));
    }
    if without_bonus(&baseline.train) != without_bonus(&variant.train) {
        return Err(HarnessError::Confound(
            "baseline and variant may differ only in the cooperation-bonus settings".into(),
        ));
    }
    Ok(())
}

/// Final-window means of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailMeans {
    pub red: f64,
    pub green: f64,
    pub total: f64,
}

/// Means of the last 20% of episodes (at least one).
pub fn tail_means(table: &MetricsTable) -> TailMeans {
    let n = table.rows.len();
    let k = (n / 5).max(1).min(n);
    let tail = &table.rows[n - k..];
    let mean = |f: fn(&coop_maddpg::maddpg::MetricsRow) -> f64| {
        tail.iter().map(f).sum::<f64>() / k as f64
    };
    TailMeans {
        red: mean(|r| r.red_team),
        green: mean(|r| r.green_team),
        total: mean(|r| r.total),
    }
}

/// Paired sign test of `variant − baseline` differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignTest {
    pub positive: usize,
    pub negative: usize,
    pub ties: usize,
    /// Exact two-sided binomial p-value over the non-tied pairs.
    pub p_value: f64,
}

impl SignTest {
    pub fn from_differences(diffs: &[f64]) -> Self {
        let positive = diffs.iter().filter(|&&d| d > 0.0).count();
        let negative = diffs.iter().filter(|&&d| d < 0.0).count();
        let ties = diffs.len() - positive - negative;
        Self {
            positive,
            negative,
            ties,
            p_value: sign_test_p(positive, negative),
        }
    }
}

fn sign_test_p(positive: usize, negative: usize) -> f64 {
    let n = positive + negative;
    if n == 0 {
        return 1.0;
    }
    let smaller = positive.min(negative);
    // P(X ≤ smaller), X ~ Binomial(n, 1/2), accumulated in log space
    let ln_half_n = n as f64 * 0.5f64.ln();
    let mut ln_choose = 0.0f64;
    let mut tail = 0.0;
    for k in 0..=smaller {
        if k > 0 {
            ln_choose += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        tail += (ln_choose + ln_half_n).exp();
    }
    (2.0 * tail).min(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedComparison {
    pub seed: u64,
    pub baseline: TailMeans,
    pub variant: TailMeans,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub baseline_config: ExperimentConfig,
    pub variant_config: ExperimentConfig,
    pub seeds: Vec<SeedComparison>,
    pub pooled_baseline: TailMeans,
    pub pooled_variant: TailMeans,
    pub red: SignTest,
    pub green: SignTest,
    pub total: SignTest,
}

impl ComparisonReport {
    pub fn from_tables(
        baseline_config: ExperimentConfig,
        variant_config: ExperimentConfig,
        pairs: &[(u64, MetricsTable, MetricsTable)],
    ) -> Self {
        let seeds: Vec<SeedComparison> = pairs
            .iter()
            .map(|(seed, b, v)| SeedComparison {
                seed: *seed,
                baseline: tail_means(b),
                variant: tail_means(v),
            })
            .collect();
        let n = seeds.len().max(1) as f64;
        let pool = |f: &dyn Fn(&SeedComparison) -> TailMeans| TailMeans {
            red: seeds.iter().map(|s| f(s).red).sum::<f64>() / n,
            green: seeds.iter().map(|s| f(s).green).sum::<f64>() / n,
            total: seeds.iter().map(|s| f(s).total).sum::<f64>() / n,
        };
        let test = |f: fn(&TailMeans) -> f64| {
            let diffs: Vec<f64> = seeds.iter().map(|s| f(&s.variant) - f(&s.baseline)).collect();
            SignTest::from_differences(&diffs)
        };
        Self {
            pooled_baseline: pool(&|s| s.baseline),
            pooled_variant: pool(&|s| s.variant),
            red: test(|m| m.red),
            green: test(|m| m.green),
            total: test(|m| m.total),
            seeds,
            baseline_config,
            variant_config,
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# baseline vs variant: mean episodic reward over the final 20% of episodes");
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "seed,baseline_red,variant_red,diff_red,baseline_green,variant_green,diff_green,baseline_total,variant_total,diff_total"
        );
        for c in &self.seeds {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                c.seed,
                c.baseline.red,
                c.variant.red,
                c.variant.red - c.baseline.red,
                c.baseline.green,
                c.variant.green,
                c.variant.green - c.baseline.green,
                c.baseline.total,
                c.variant.total,
                c.variant.total - c.baseline.total
            );
        }
        let (b, v) = (self.pooled_baseline, self.pooled_variant);
        let _ = writeln!(
            s,
            "pooled,{},{},{},{},{},{},{},{},{}",
            b.red,
            v.red,
            v.red - b.red,
            b.green,
            v.green,
            v.green - b.green,
            b.total,
            v.total,
            v.total - b.total
        );
        let _ = writeln!(s);
        let _ = writeln!(s, "# paired sign test (variant - baseline)");
        for (name, t) in [("red_team", self.red), ("green_team", self.green), ("total", self.total)] {
            let _ = writeln!(
                s,
                "{name}: {} higher, {} lower, {} tied; two-sided p = {:.4}",
                t.positive, t.negative, t.ties, t.p_value
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "# summary: pooled variant minus baseline: red team {:+.4}, green team {:+.4}, total {:+.4}",
            v.red - b.red,
            v.green - b.green,
            v.total - b.total
        );
        let _ = writeln!(s);
        let _ = writeln!(s, "# baseline config");
        s.push_str(&self.baseline_config.to_toml());
        let _ = writeln!(s);
        let _ = writeln!(s, "# variant config");
        s.push_str(&self.variant_config.to_toml());
        s
    }
}

/// Trains both arms into `out/baseline` and `out/variant` and writes `out/report.txt`.
pub fn compare(
    baseline: &ExperimentConfig,
    variant: &ExperimentConfig,
    out: &Path,
) -> Result<ComparisonReport> {
    check_comparable(baseline, variant)?;
    baseline.validate()?;
    variant.validate()?;
    prepare_output(out)?;
    let arm = |cfg: &ExperimentConfig, name: &str| ExperimentConfig {
        output_dir: out.join(name),
        ..cfg.clone()
    };
    let base = arm(baseline, "baseline");
    let var = arm(variant, "variant");
    run_experiment(&base)?;
    run_experiment(&var)?;
    let report = report_from_dirs(&base, &var)?;
    let path = out.join("report.txt");
    std::fs::write(&path, report.render()).map_err(io_err(&path))?;
    Ok(report)
}

/// Builds the report by reading both arms' metrics CSVs back from disk.
pub fn report_from_dirs(base: &ExperimentConfig, var: &ExperimentConfig) -> Result<ComparisonReport> {
    let pairs = base
        .seeds
        .iter()
        .map(|&seed| {
            Ok((
                seed,
                MetricsTable::read(&metrics_path(&base.output_dir, seed))?,
                MetricsTable::read(&metrics_path(&var.output_dir, seed))?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport::from_tables(base.clone(), var.clone(), &pairs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_test_values() {
        // 5 of 5 positive: p = 2 / 32
        let t = SignTest::from_differences(&[1.0, 2.0, 0.5, 3.0, 0.1]);
        assert_eq!((t.positive, t.negative, t.ties), (5, 0, 0));
        assert!((t.p_value - 0.0625).abs() < 1e-12);
        // 4 vs 1: p = 2 · 6/32
        let t = SignTest::from_differences(&[1.0, 2.0, -0.5, 3.0, 0.1]);
        assert!((t.p_value - 0.375).abs() < 1e-12);
        let t = SignTest::from_differences(&[0.0, 0.0]);
        assert_eq!((t.ties, t.p_value), (2, 1.0));
        assert_eq!(SignTest::from_differences(&[1.0, -1.0]).p_value, 1.0);
    }

    #[test]
    fn confounds_are_rejected() {
        let base = ExperimentConfig::default();
        let mut other = base.clone();
        other.seeds = vec![1];
        assert!(matches!(check_comparable(&base, &other), Err(HarnessError::Confound(_))));
        let mut other = base.clone();
        other.world.num_obstacles = 2;
        assert!(check_comparable(&base, &other).is_err());
        let mut other = base.clone();
        other.train.gamma = 0.9;
        assert!(check_comparable(&base, &other).is_err());
        let mut other = base.clone();
        other.train.bonus_enabled = false;
        other.train.cooperation_factor = 5.0;
        assert!(check_comparable(&base, &other).is_ok());
    }

    #[test]
    fn unwritable_output_fails_early() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain_file");
        std::fs::write(&file, b"x").unwrap();
        let cfg = ExperimentConfig {
            output_dir: file.join("sub"),
            ..ExperimentConfig::default()
        };
        assert!(matches!(run_experiment(&cfg), Err(HarnessError::Io { .. })));
    }
}
