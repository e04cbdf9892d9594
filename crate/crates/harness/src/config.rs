use std::path::{Path, PathBuf};

use coop_maddpg::env::WorldConfig;
use coop_maddpg::maddpg::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::{io_err, HarnessError, Result};

/// A full experiment: world, training hyperparameters, seeds and outputs.
///
/// Stored as TOML. Missing keys take their defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Episodes between greedy evaluations; 0 disables them.
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Write checkpoint files at all. They hold the replay buffer, so they get large.
    pub checkpoints: bool,
    /// Episodes between periodic checkpoints; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub smoothing_window: usize,
    /// Record real elapsed milliseconds in `wall_ms`. Off writes 0 so reruns are byte-identical.
    pub wall_clock: bool,
    pub world: WorldConfig,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            output_dir: PathBuf::from("runs"),
            eval_every: 500,
            eval_episodes: 10,
            checkpoints: true,
            checkpoint_every: 1000,
            smoothing_window: 100,
            wall_clock: false,
            world: WorldConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Every configuration key with its default, shown by `--help`.
pub const CONFIG_REFERENCE: &str = "\
CONFIG FILE (TOML; every key optional, command-line flags override file values)

  seeds = [0]                  training seeds, one run each
  output_dir = \"runs\"          where CSVs, checkpoints and the manifest go
  eval_every = 500             episodes between greedy evaluations (0 = never)
  eval_episodes = 10           episodes per greedy evaluation
  checkpoints = true           write checkpoints (they include the replay buffer)
  checkpoint_every = 1000      episodes between checkpoints (0 = final only)
  smoothing_window = 100       moving-average window for plots, in episodes
  wall_clock = false           write measured wall_ms instead of 0

  [world]
  num_red = 4                  chasing agents
  num_green = 2                evading agents
  num_obstacles = 3
  arena_half_width = 1.0       spawn square is [-h, h]^2
  dt = 0.1                     integration step, seconds
  damping = 0.25               velocity loss per step, in [0, 1)
  mass = 1.0
  red_max_speed = 1.0
  green_max_speed = 1.3
  force_magnitude = 5.0        force of one directional action
  red_radius = 0.075
  green_radius = 0.05
  obstacle_radius = 0.2
  contact_stiffness = 100.0    obstacle repulsion constant
  episode_length = 25          replaced by train.max_episode_length when training
  shared_catch_reward = true   every red agent is paid for any catch
  catch_reward = 10.0
  caught_penalty = -10.0
  chase_shaping = 0.1          red: minus this times distance to nearest green
  water_shaping = 0.1          green: minus this times distance to the water
  boundary_scale = 1.0         green soft-wall penalty multiplier

  [train]
  episodes = 25000
  max_episode_length = 25
  gamma = 0.95                 discount, in [0, 1)
  tau = 0.01                   target soft-update rate, in (0, 1]
  batch_size = 1024            minibatch size S
  buffer_capacity = 1000000
  update_every = 100           environment steps between learning rounds
  warmup = 1024                transitions stored before learning starts
  actor_lr = 0.01
  critic_lr = 0.01
  hidden_sizes = [64, 64]
  temperature = 1.0            Gumbel-softmax temperature
  straight_through = false     feed hard actions to the critic in the actor update
  bootstrap_on_timeout = true  keep bootstrapping on the last step of an episode
  bonus_enabled = true         apply the cooperation factor to critic targets
  bonus_red = true             ... for red agents
  bonus_green = true           ... for green agents
  cooperation_threshold = 1    L: fire when more than L teammates are rewarded
  cooperation_factor = 2.0     phi: reward multiplier when the gate fires
  seed = 0                     replaced per run by the entries of `seeds`
";

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let cfg = Self::from_toml(&text).map_err(|message| HarnessError::ConfigFile {
            path: path.to_path_buf(),
            message,
        })?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| HarnessError::Core(coop_maddpg::Error::Config(m.to_string()));
        if self.seeds.is_empty() {
            return Err(bad("at least one seed is required"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(bad("seeds must be distinct"));
        }
        if self.smoothing_window == 0 {
            return Err(bad("smoothing_window must be at least 1"));
        }
        self.world.validate()?;
        self.train.validate()?;
        Ok(())
    }

    /// Training config of the run for `seed`.
    pub fn train_for_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }
}
