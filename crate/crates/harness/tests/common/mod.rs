#![allow(dead_code)]

use std::path::Path;

use coop_maddpg_harness::ExperimentConfig;

/// A run small enough for tests but past warm-up, so learning updates happen.
pub fn tiny(out: &Path, seeds: &[u64], episodes: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml(
        "eval_every = 5\neval_episodes = 2\ncheckpoint_every = 5\nsmoothing_window = 3\n\
         [train]\nbatch_size = 32\nwarmup = 64\nupdate_every = 25\nhidden_sizes = [16, 16]\n",
    )
    .unwrap();
    cfg.seeds = seeds.to_vec();
    cfg.output_dir = out.to_path_buf();
    cfg.train.episodes = episodes;
    cfg
}
