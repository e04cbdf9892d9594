//! MADDPG: decentralized actors, centralized critics, and the team
//! cooperation bonus on critic targets.
//!
//! Every agent owns an actor over its own observation (4 action logits) and a
//! critic over the joint observation and joint action. The critic target for
//! agent `i` on sample `j` is
//!
//! ```text
//! y = φ_i · r_i + γ · Q'_i(x', μ'_1(o'_1), …, μ'_N(o'_N))
//! ```
//!
//! where `φ_i` comes from [`phi::cooperation_factor`] over the rewards that
//! agent `i`'s team received in that transition. With the bonus off `φ_i ≡ 1`
//! and the target is plain MADDPG.

pub mod buffer;
pub mod learner;
pub mod phi;
pub mod trainer;

use serde::{Deserialize, Serialize};

use crate::env::{Team, WorldConfig, NUM_ACTIONS};
use crate::error::{config, Result};

pub use buffer::{Minibatch, ReplayBuffer, Transition};
pub use learner::{
    actor_objective_gradient, actor_update, compute_targets, compute_targets_reference,
    critic_loss_gradient, critic_update, select_actions, AgentLearner,
};
pub use trainer::{evaluate, train, Evaluation, MetricsRow, RngState, TargetRule, Trainer, TrainerSnapshot};

/// Hyperparameters of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: usize,
    /// Steps per episode; overrides the world's `episode_length`.
    pub max_episode_length: usize,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Learn once every this many environment steps.
    pub update_every: u64,
    /// Transitions stored before the first update.
    pub warmup: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub hidden_sizes: Vec<usize>,
    /// Gumbel-softmax temperature for exploration and the actor gradient.
    pub temperature: f64,
    /// Feed the critic the hard one-hot action in the actor update, with the
    /// relaxed sample's gradient (straight-through). Off: feed the relaxed sample.
    pub straight_through: bool,
    /// Keep bootstrapping on the final step of an episode, treating the
    /// time limit as a truncation rather than a terminal state.
    pub bootstrap_on_timeout: bool,
    pub bonus_enabled: bool,
    /// Per-team switches, consulted only when `bonus_enabled`.
    pub bonus_red: bool,
    pub bonus_green: bool,
    /// L: the gate fires when strictly more than this many teammates are rewarded.
    pub cooperation_threshold: u32,
    /// φ: reward multiplier when the gate fires.
    pub cooperation_factor: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 25_000,
            max_episode_length: 25,
            gamma: 0.95,
            tau: 0.01,
            batch_size: 1024,
            buffer_capacity: 1_000_000,
            update_every: 100,
            warmup: 1024,
            actor_lr: 1e-2,
            critic_lr: 1e-2,
            hidden_sizes: vec![64, 64],
            temperature: 1.0,
            straight_through: false,
            bootstrap_on_timeout: true,
            bonus_enabled: true,
            bonus_red: true,
            bonus_green: true,
            cooperation_threshold: 1,
            cooperation_factor: 2.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Plain MADDPG: the same defaults with the bonus switched off.
    pub fn baseline() -> Self {
        Self {
            bonus_enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(config(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(config(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_capacity {
            return Err(config(format!(
                "batch_size must lie in [1, buffer_capacity = {}], got {}",
                self.buffer_capacity, self.batch_size
            )));
        }
        if self.update_every == 0 {
            return Err(config("update_every must be at least 1"));
        }
        if self.max_episode_length == 0 {
            return Err(config("max_episode_length must be at least 1"));
        }
        if !(self.cooperation_factor > 0.0 && self.cooperation_factor.is_finite()) {
            return Err(config(format!(
                "cooperation_factor must be a positive real, got {}",
                self.cooperation_factor
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(config("temperature must be positive"));
        }
        for (name, lr) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr)] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(config(format!("{name} must be a nonnegative real, got {lr}")));
            }
        }
        if self.hidden_sizes.iter().any(|&h| h == 0) {
            return Err(config("hidden layer sizes must be positive"));
        }
        Ok(())
    }

    /// Whether the cooperation gate is evaluated for agents of `team`.
    pub fn bonus_applies(&self, team: Team) -> bool {
        self.bonus_enabled
            && match team {
                Team::Red => self.bonus_red,
                Team::Green => self.bonus_green,
            }
    }
}

/// Which team each agent belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TeamAssignment {
    teams: Vec<Team>,
}

impl TeamAssignment {
    pub fn new(teams: Vec<Team>) -> Self {
        Self { teams }
    }

    pub fn from_world(world: &WorldConfig) -> Self {
        Self::new((0..world.num_agents()).map(|i| world.team_of(i)).collect())
    }

    pub fn num_agents(&self) -> usize {
        self.teams.len()
    }

    pub fn team(&self, agent: usize) -> Team {
        self.teams[agent]
    }

    pub fn members(&self, team: Team) -> Vec<usize> {
        (0..self.teams.len()).filter(|&i| self.teams[i] == team).collect()
    }

    pub fn teammates_of(&self, agent: usize) -> Vec<usize> {
        self.members(self.teams[agent])
    }
}

/// Column layout of joint observations and of the critic input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointLayout {
    pub num_agents: usize,
    pub obs_dim: usize,
}

impl JointLayout {
    pub fn new(num_agents: usize, obs_dim: usize) -> Self {
        Self { num_agents, obs_dim }
    }

    pub fn joint_obs_dim(&self) -> usize {
        self.num_agents * self.obs_dim
    }

    pub fn joint_action_dim(&self) -> usize {
        self.num_agents * NUM_ACTIONS
    }

    pub fn critic_input_dim(&self) -> usize {
        self.joint_obs_dim() + self.joint_action_dim()
    }

    pub fn obs_cols(&self, agent: usize) -> std::ops::Range<usize> {
        agent * self.obs_dim..(agent + 1) * self.obs_dim
    }

    pub fn action_cols(&self, agent: usize) -> std::ops::Range<usize> {
        agent * NUM_ACTIONS..(agent + 1) * NUM_ACTIONS
    }

    /// Columns of agent `agent`'s action inside the critic input.
    pub fn critic_action_cols(&self, agent: usize) -> std::ops::Range<usize> {
        let off = self.joint_obs_dim();
        off + agent * NUM_ACTIONS..off + (agent + 1) * NUM_ACTIONS
    }
}
