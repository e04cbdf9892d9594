//! The episode loop: explore, store, and every `update_every` steps train
//! each agent's critic and actor on its own minibatch, then move all target
//! networks toward their online networks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::buffer::{ReplayBuffer, Transition};
use super::learner::{
    actor_update, compute_targets, compute_targets_reference, critic_update, select_actions,
    AgentLearner,
};
use super::{JointLayout, TeamAssignment, TrainConfig};
use crate::env::{Action, ParticleWorld, Team, WorldConfig};
use crate::error::{contract, Error, Result};

/// How critic targets are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetRule {
    /// Targets with the cooperation gate (inert when the bonus is disabled).
    Cooperative,
    /// Textbook MADDPG targets; the gate code is never reached.
    Reference,
}

/// One episode's rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub episode: usize,
    /// Undiscounted episodic reward per agent, red agents first.
    pub agent_rewards: Vec<f64>,
    pub red_team: f64,
    pub green_team: f64,
    /// `red_team + green_team`.
    pub total: f64,
    pub wall_ms: u64,
}

impl MetricsRow {
    pub fn new(episode: usize, agent_rewards: Vec<f64>, teams: &TeamAssignment) -> Self {
        let team_sum = |team: Team| -> f64 {
            teams
                .members(team)
                .into_iter()
                .fold(0.0, |acc, i| acc + agent_rewards[i])
        };
        let red_team = team_sum(Team::Red);
        let green_team = team_sum(Team::Green);
        Self {
            episode,
            agent_rewards,
            red_team,
            green_team,
            total: red_team + green_team,
            wall_ms: 0,
        }
    }
}

/// Portable position of a ChaCha8 stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Everything needed to continue a run bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerSnapshot {
    pub train: TrainConfig,
    pub world: WorldConfig,
    pub rule: TargetRule,
    pub learners: Vec<AgentLearner>,
    pub buffer: ReplayBuffer,
    pub rng: RngState,
    pub episodes_done: usize,
    pub total_steps: u64,
}

#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    world: ParticleWorld,
    teams: TeamAssignment,
    layout: JointLayout,
    rule: TargetRule,
    learners: Vec<AgentLearner>,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    episodes_done: usize,
    total_steps: u64,
}

fn effective_world(config: &TrainConfig, world: &WorldConfig) -> WorldConfig {
    WorldConfig {
        episode_length: config.max_episode_length,
        ..world.clone()
    }
}

impl Trainer {
    pub fn new(config: TrainConfig, world: WorldConfig) -> Result<Self> {
        Self::with_rule(config, world, TargetRule::Cooperative)
    }

    /// Plain MADDPG on the separate reference target path.
    pub fn reference(config: TrainConfig, world: WorldConfig) -> Result<Self> {
        Self::with_rule(config, world, TargetRule::Reference)
    }

    pub fn with_rule(config: TrainConfig, world: WorldConfig, rule: TargetRule) -> Result<Self> {
        config.validate()?;
        let world = ParticleWorld::new(effective_world(&config, &world))?;
        let teams = TeamAssignment::from_world(world.config());
        let layout = JointLayout::new(world.num_agents(), world.config().observation_dim());
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let learners = (0..layout.num_agents)
            .map(|i| AgentLearner::new(teams.team(i), &layout, &config.hidden_sizes, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let buffer = ReplayBuffer::new(config.buffer_capacity)?;
        Ok(Self {
            config,
            world,
            teams,
            layout,
            rule,
            learners,
            buffer,
            rng,
            episodes_done: 0,
            total_steps: 0,
        })
    }

    pub fn restore(snapshot: TrainerSnapshot) -> Result<Self> {
        snapshot.train.validate()?;
        let world = ParticleWorld::new(effective_world(&snapshot.train, &snapshot.world))?;
        let teams = TeamAssignment::from_world(world.config());
        let layout = JointLayout::new(world.num_agents(), world.config().observation_dim());
        if snapshot.learners.len() != layout.num_agents
            || snapshot.learners.iter().enumerate().any(|(i, l)| {
                l.team != teams.team(i)
                    || l.actor.input_dim() != layout.obs_dim
                    || l.critic.input_dim() != layout.critic_input_dim()
                    || !l.actor.same_shape(&l.target_actor)
                    || !l.critic.same_shape(&l.target_critic)
            })
        {
            return Err(contract("snapshot learners do not fit the configured world"));
        }
        if snapshot.buffer.capacity() != snapshot.train.buffer_capacity {
            return Err(contract("snapshot buffer capacity differs from its config"));
        }
        Ok(Self {
            config: snapshot.train,
            world,
            teams,
            layout,
            rule: snapshot.rule,
            learners: snapshot.learners,
            buffer: snapshot.buffer,
            rng: snapshot.rng.restore(),
            episodes_done: snapshot.episodes_done,
            total_steps: snapshot.total_steps,
        })
    }

    /// Snapshot with the world config the trainer was given, episode length aside.
    pub fn snapshot(&self, world: &WorldConfig) -> TrainerSnapshot {
        TrainerSnapshot {
            train: self.config.clone(),
            world: world.clone(),
            rule: self.rule,
            learners: self.learners.clone(),
            buffer: self.buffer.clone(),
            rng: RngState::capture(&self.rng),
            episodes_done: self.episodes_done,
            total_steps: self.total_steps,
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn world(&self) -> &ParticleWorld {
        &self.world
    }

    pub fn teams(&self) -> &TeamAssignment {
        &self.teams
    }

    pub fn layout(&self) -> &JointLayout {
        &self.layout
    }

    pub fn learners(&self) -> &[AgentLearner] {
        &self.learners
    }

    pub fn into_learners(self) -> Vec<AgentLearner> {
        self.learners
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn episodes_done(&self) -> usize {
        self.episodes_done
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    /// Runs one exploring episode, learning along the way.
    pub fn run_episode(&mut self) -> Result<MetricsRow> {
        let reset_seed = self.rng.random::<u64>();
        let (mut state, mut obs) = self.world.reset(reset_seed)?;
        let mut totals = vec![0.0; self.layout.num_agents];
        loop {
            let picks = select_actions(
                &self.learners,
                &obs,
                true,
                self.config.temperature,
                &mut self.rng,
            )?;
            let actions: Vec<Action> = picks.iter().map(|(a, _)| *a).collect();
            let out = self.world.step(&state, &actions)?;
            for (t, r) in totals.iter_mut().zip(&out.rewards) {
                *t += r;
            }
            self.buffer.push(Transition {
                obs: obs.concat(),
                actions: picks.into_iter().flat_map(|(_, v)| v).collect(),
                rewards: out.rewards,
                next_obs: out.observations.concat(),
                done: out.done,
            });
            self.total_steps += 1;
            if self.buffer.len() >= self.config.warmup
                && self.total_steps % self.config.update_every == 0
            {
                self.update()?;
            }
            state = out.state;
            obs = out.observations;
            if out.done {
                break;
            }
        }
        let row = MetricsRow::new(self.episodes_done, totals, &self.teams);
        self.episodes_done += 1;
        Ok(row)
    }

    /// One learning round over all agents followed by the target soft update.
    fn update(&mut self) -> Result<()> {
        for agent in 0..self.layout.num_agents {
            let batch = match self.buffer.sample(self.config.batch_size, &mut self.rng) {
                Ok(b) => b,
                Err(Error::NotReady { .. }) => return Ok(()),
                Err(e) => return Err(e),
            };
            let targets = match self.rule {
                TargetRule::Cooperative => compute_targets(
                    &batch,
                    &self.learners,
                    &self.layout,
                    &self.teams,
                    &self.config,
                    agent,
                )?,
                TargetRule::Reference => compute_targets_reference(
                    &batch,
                    &self.learners,
                    &self.layout,
                    &self.config,
                    agent,
                )?,
            };
            let learner = &mut self.learners[agent];
            critic_update(learner, &batch, &targets, self.config.critic_lr)?;
            actor_update(learner, agent, &self.layout, &batch, &self.config, &mut self.rng)?;
        }
        for learner in &mut self.learners {
            learner.soft_update_targets(self.config.tau)?;
        }
        Ok(())
    }
}

/// Trains for `config.episodes` episodes and returns the learners with one row per episode.
pub fn train(config: TrainConfig, world: WorldConfig) -> Result<(Vec<AgentLearner>, Vec<MetricsRow>)> {
    let episodes = config.episodes;
    let mut trainer = Trainer::new(config, world)?;
    let rows = (0..episodes)
        .map(|_| trainer.run_episode())
        .collect::<Result<Vec<_>>>()?;
    Ok((trainer.into_learners(), rows))
}

/// Greedy-policy rollouts; the cooperation factor plays no part here.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub rows: Vec<MetricsRow>,
    pub agent_means: Vec<f64>,
    pub red_mean: f64,
    pub green_mean: f64,
    pub total_mean: f64,
}

pub fn evaluate(
    learners: &[AgentLearner],
    world: &WorldConfig,
    episodes: usize,
    seed: u64,
) -> Result<Evaluation> {
    let world = ParticleWorld::new(world.clone())?;
    let teams = TeamAssignment::from_world(world.config());
    if learners.len() != world.num_agents() {
        return Err(contract(format!(
            "{} learners for {} agents",
            learners.len(),
            world.num_agents()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let (mut state, mut obs) = world.reset(rng.random::<u64>())?;
        let mut totals = vec![0.0; world.num_agents()];
        loop {
            let picks = select_actions(learners, &obs, false, 1.0, &mut rng)?;
            let actions: Vec<Action> = picks.iter().map(|(a, _)| *a).collect();
            let out = world.step(&state, &actions)?;
            for (t, r) in totals.iter_mut().zip(&out.rewards) {
                *t += r;
            }
            state = out.state;
            obs = out.observations;
            if out.done {
                break;
            }
        }
        rows.push(MetricsRow::new(episode, totals, &teams));
    }
    let n = episodes.max(1) as f64;
    let agent_means = (0..world.num_agents())
        .map(|i| rows.iter().map(|r| r.agent_rewards[i]).sum::<f64>() / n)
        .collect();
    let mean = |f: fn(&MetricsRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    Ok(Evaluation {
        red_mean: mean(|r| r.red_team),
        green_mean: mean(|r| r.green_team),
        total_mean: mean(|r| r.total),
        agent_means,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TrainConfig {
        TrainConfig {
            episodes: 6,
            batch_size: 32,
            warmup: 32,
            update_every: 10,
            buffer_capacity: 500,
            hidden_sizes: vec![16, 16],
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_episodes_leave_learners_at_init() {
        let cfg = TrainConfig { episodes: 0, ..small() };
        let (learners, rows) = train(cfg.clone(), WorldConfig::default()).unwrap();
        assert!(rows.is_empty());
        let fresh = Trainer::new(cfg, WorldConfig::default()).unwrap();
        assert_eq!(learners, fresh.learners());
    }

    #[test]
    fn rows_are_consistent() {
        let (_, rows) = train(small(), WorldConfig::default()).unwrap();
        assert_eq!(rows.len(), 6);
        for (k, r) in rows.iter().enumerate() {
            assert_eq!(r.episode, k);
            assert_eq!(r.agent_rewards.len(), 6);
            let red = r.agent_rewards[..4].iter().fold(0.0, |a, b| a + b);
            let green = r.agent_rewards[4..].iter().fold(0.0, |a, b| a + b);
            assert_eq!(r.red_team, red);
            assert_eq!(r.green_team, green);
            assert_eq!(r.total, red + green);
        }
    }

    #[test]
    fn training_moves_parameters_and_targets() {
        let cfg = small();
        let fresh = Trainer::new(cfg.clone(), WorldConfig::default()).unwrap();
        let (learners, _) = train(cfg, WorldConfig::default()).unwrap();
        for (a, b) in learners.iter().zip(fresh.learners()) {
            assert_ne!(a.actor, b.actor);
            assert_ne!(a.critic, b.critic);
            assert_ne!(a.target_critic, b.target_critic);
            assert_ne!(a.target_critic, a.critic);
            assert!(a.actor.is_finite() && a.critic.is_finite());
        }
    }

    #[test]
    fn snapshot_restore_continues_identically() {
        let world = WorldConfig::default();
        let mut straight = Trainer::new(small(), world.clone()).unwrap();
        let mut split = Trainer::new(small(), world.clone()).unwrap();
        for _ in 0..3 {
            straight.run_episode().unwrap();
            split.run_episode().unwrap();
        }
        let mut resumed = Trainer::restore(split.snapshot(&world)).unwrap();
        for _ in 0..3 {
            assert_eq!(straight.run_episode().unwrap(), resumed.run_episode().unwrap());
        }
        assert_eq!(straight.learners(), resumed.learners());
    }

    #[test]
    fn rng_state_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..37 {
            rng.random::<u32>();
        }
        let mut back = RngState::capture(&rng).restore();
        assert_eq!(rng.random::<u64>(), back.random::<u64>());
    }

    #[test]
    fn evaluation_is_deterministic_and_aggregates() {
        let trainer = Trainer::new(small(), WorldConfig::default()).unwrap();
        let a = evaluate(trainer.learners(), &WorldConfig::default(), 5, 3).unwrap();
        let b = evaluate(trainer.learners(), &WorldConfig::default(), 5, 3).unwrap();
        assert_eq!(a, b);
        for r in &a.rows {
            assert_eq!(r.red_team, r.agent_rewards[..4].iter().fold(0.0, |x, y| x + y));
        }
        assert!(evaluate(&trainer.learners()[..2], &WorldConfig::default(), 1, 0).is_err());
    }
}
