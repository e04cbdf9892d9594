//! Deterministic 2-D predator-prey particle world.
//!
//! Red agents chase green agents; green agents try to reach a single water
//! landmark while avoiding capture. Circular obstacles are fixed and repel
//! agents through a stiff contact force. Agents act with one of four
//! directional forces.
//!
//! Agent indices run over red agents first, then green agents. Every
//! operation is a pure function of its inputs: the only randomness is the
//! spawn layout drawn in [`ParticleWorld::reset`] from the given seed.

use std::ops::{Add, AddAssign, Mul, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, contract, Result};

/// Spawn attempts allowed across all entities before the arena is declared too crowded.
pub const MAX_SPAWN_ATTEMPTS: usize = 10_000;

/// Number of discrete actions.
pub const NUM_ACTIONS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Team {
    Red,
    Green,
}

impl Team {
    pub fn name(self) -> &'static str {
        match self {
            Team::Red => "red",
            Team::Green => "green",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Result<Action> {
        Action::ALL
            .get(index)
            .copied()
            .ok_or_else(|| contract(format!("action index {index} out of range")))
    }

    /// Unit force direction.
    pub fn direction(self) -> Vec2 {
        match self {
            Action::Up => Vec2::new(0.0, 1.0),
            Action::Down => Vec2::new(0.0, -1.0),
            Action::Left => Vec2::new(-1.0, 0.0),
            Action::Right => Vec2::new(1.0, 0.0),
        }
    }

    pub fn one_hot(self) -> [f64; NUM_ACTIONS] {
        let mut v = [0.0; NUM_ACTIONS];
        v[self.index()] = 1.0;
        v
    }
}

/// Physical constants, team sizes and reward coefficients of the world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub num_red: usize,
    pub num_green: usize,
    pub num_obstacles: usize,
    pub arena_half_width: f64,
    pub dt: f64,
    pub damping: f64,
    pub mass: f64,
    pub red_max_speed: f64,
    pub green_max_speed: f64,
    pub force_magnitude: f64,
    pub red_radius: f64,
    pub green_radius: f64,
    pub obstacle_radius: f64,
    /// Spring constant of the obstacle contact force.
    pub contact_stiffness: f64,
    pub episode_length: usize,
    /// Every red agent is paid for a catch made by any red agent.
    pub shared_catch_reward: bool,
    pub catch_reward: f64,
    pub caught_penalty: f64,
    pub chase_shaping: f64,
    pub water_shaping: f64,
    /// Multiplier on the green agents' soft-wall penalty; 0 disables it.
    pub boundary_scale: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            num_red: 4,
            num_green: 2,
            num_obstacles: 3,
            arena_half_width: 1.0,
            dt: 0.1,
            damping: 0.25,
            mass: 1.0,
            red_max_speed: 1.0,
            green_max_speed: 1.3,
            force_magnitude: 5.0,
            red_radius: 0.075,
            green_radius: 0.05,
            obstacle_radius: 0.2,
            contact_stiffness: 100.0,
            episode_length: 25,
            shared_catch_reward: true,
            catch_reward: 10.0,
            caught_penalty: -10.0,
            chase_shaping: 0.1,
            water_shaping: 0.1,
            boundary_scale: 1.0,
        }
    }
}

impl WorldConfig {
    pub fn num_agents(&self) -> usize {
        self.num_red + self.num_green
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_red == 0 || self.num_green == 0 {
            return Err(config("each team needs at least one agent"));
        }
        let positive = [
            ("arena_half_width", self.arena_half_width),
            ("dt", self.dt),
            ("mass", self.mass),
            ("red_max_speed", self.red_max_speed),
            ("green_max_speed", self.green_max_speed),
            ("red_radius", self.red_radius),
            ("green_radius", self.green_radius),
            ("obstacle_radius", self.obstacle_radius),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(config(format!("{name} must be positive and finite, got {value}")));
            }
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(config(format!("damping must lie in [0, 1), got {}", self.damping)));
        }
        if self.episode_length == 0 {
            return Err(config("episode_length must be at least 1"));
        }
        let finite = [
            ("force_magnitude", self.force_magnitude),
            ("contact_stiffness", self.contact_stiffness),
            ("catch_reward", self.catch_reward),
            ("caught_penalty", self.caught_penalty),
            ("chase_shaping", self.chase_shaping),
            ("water_shaping", self.water_shaping),
            ("boundary_scale", self.boundary_scale),
        ];
        for (name, value) in finite {
            if !value.is_finite() {
                return Err(config(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    pub fn team_of(&self, agent: usize) -> Team {
        if agent < self.num_red {
            Team::Red
        } else {
            Team::Green
        }
    }

    pub fn radius_of(&self, agent: usize) -> f64 {
        match self.team_of(agent) {
            Team::Red => self.red_radius,
            Team::Green => self.green_radius,
        }
    }

    pub fn max_speed_of(&self, agent: usize) -> f64 {
        match self.team_of(agent) {
            Team::Red => self.red_max_speed,
            Team::Green => self.green_max_speed,
        }
    }

    /// Length of every agent's observation vector.
    pub fn observation_dim(&self) -> usize {
        2 + 2 + 2 * self.num_obstacles + 2 + 2 * (self.num_agents() - 1) + 2 * self.num_green
    }

    /// Column names for per-agent metrics, e.g. `red_0`, `green_1`.
    pub fn agent_names(&self) -> Vec<String> {
        (0..self.num_red)
            .map(|i| format!("red_{i}"))
            .chain((0..self.num_green).map(|j| format!("green_{j}")))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EntityState {
    pub position: Vec2,
    pub velocity: Vec2,
}

impl EntityState {
    pub fn at(position: Vec2) -> Self {
        Self {
            position,
            velocity: Vec2::ZERO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub red: Vec<EntityState>,
    pub green: Vec<EntityState>,
    pub obstacles: Vec<EntityState>,
    pub water: Vec2,
    pub step: usize,
}

impl WorldState {
    pub fn num_agents(&self) -> usize {
        self.red.len() + self.green.len()
    }

    pub fn agent(&self, index: usize) -> &EntityState {
        if index < self.red.len() {
            &self.red[index]
        } else {
            &self.green[index - self.red.len()]
        }
    }

    pub fn agent_mut(&mut self, index: usize) -> &mut EntityState {
        if index < self.red.len() {
            &mut self.red[index]
        } else {
            let n = self.red.len();
            &mut self.green[index - n]
        }
    }

    pub fn agents(&self) -> impl Iterator<Item = &EntityState> {
        self.red.iter().chain(self.green.iter())
    }
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: WorldState,
    pub rewards: Vec<f64>,
    pub observations: Vec<Vec<f64>>,
    pub done: bool,
}

/// A validated world configuration together with the operations over its states.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleWorld {
    config: WorldConfig,
}

impl ParticleWorld {
    pub fn new(config: WorldConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn num_agents(&self) -> usize {
        self.config.num_agents()
    }

    /// Samples a fresh non-overlapping layout and returns it with every agent's observation.
    pub fn reset(&self, seed: u64) -> Result<(WorldState, Vec<Vec<f64>>)> {
        let cfg = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = cfg.arena_half_width;
        let mut placed: Vec<(Vec2, f64)> = Vec::new();
        let mut attempts = 0usize;
        let mut spawn = |radius: f64, rng: &mut ChaCha8Rng| -> Result<Vec2> {
            loop {
                attempts += 1;
                if attempts > MAX_SPAWN_ATTEMPTS {
                    return Err(config(format!(
                        "could not place all entities without overlap in {MAX_SPAWN_ATTEMPTS} attempts; arena too crowded"
                    )));
                }
                let p = Vec2::new(
                    rng.random::<f64>() * 2.0 * h - h,
                    rng.random::<f64>() * 2.0 * h - h,
                );
                if placed.iter().all(|&(q, r)| p.distance(q) >= radius + r) {
                    placed.push((p, radius));
                    return Ok(p);
                }
            }
        };

        let mut obstacles = Vec::with_capacity(cfg.num_obstacles);
        for _ in 0..cfg.num_obstacles {
            obstacles.push(EntityState::at(spawn(cfg.obstacle_radius, &mut rng)?));
        }
        // the water landmark is a point
        let water = spawn(0.0, &mut rng)?;
        let mut red = Vec::with_capacity(cfg.num_red);
        for _ in 0..cfg.num_red {
            red.push(EntityState::at(spawn(cfg.red_radius, &mut rng)?));
        }
        let mut green = Vec::with_capacity(cfg.num_green);
        for _ in 0..cfg.num_green {
            green.push(EntityState::at(spawn(cfg.green_radius, &mut rng)?));
        }

        let state = WorldState {
            red,
            green,
            obstacles,
            water,
            step: 0,
        };
        let obs = self.observe_all(&state);
        Ok((state, obs))
    }

    /// Advances the world one step under the joint action.
    pub fn step(&self, state: &WorldState, actions: &[Action]) -> Result<StepOutcome> {
        let n = self.num_agents();
        if actions.len() != n {
            return Err(contract(format!("expected {n} actions, got {}", actions.len())));
        }
        self.check_shape(state)?;
        if state.step >= self.config.episode_length {
            return Err(contract(format!(
                "episode already finished at step {}",
                state.step
            )));
        }
        let forces: Vec<Vec2> = actions
            .iter()
            .map(|a| a.direction() * self.config.force_magnitude)
            .collect();
        let mut next = self.apply_physics(state, &forces)?;
        next.step = state.step + 1;
        let rewards = self.compute_rewards(&next);
        let observations = self.observe_all(&next);
        let done = next.step >= self.config.episode_length;
        Ok(StepOutcome {
            state: next,
            rewards,
            observations,
            done,
        })
    }

    /// Integrates one step of damped semi-implicit Euler with obstacle contact and a speed clamp.
    /// Does not advance the step counter.
    pub fn apply_physics(&self, state: &WorldState, forces: &[Vec2]) -> Result<WorldState> {
        let cfg = &self.config;
        let n = state.num_agents();
        if forces.len() != n {
            return Err(contract(format!("expected {n} forces, got {}", forces.len())));
        }
        if let Some(i) = forces.iter().position(|f| !f.is_finite()) {
            return Err(contract(format!("force on agent {i} is not finite")));
        }
        let mut next = state.clone();
        for (i, &applied) in forces.iter().enumerate() {
            let agent = state.agent(i);
            let force = applied + self.contact_force(agent.position, cfg.radius_of(i), &state.obstacles);
            let mut v = agent.velocity * (1.0 - cfg.damping) + force * (cfg.dt / cfg.mass);
            v = clamp_speed(v, cfg.max_speed_of(i));
            let slot = next.agent_mut(i);
            slot.velocity = v;
            slot.position = agent.position + v * cfg.dt;
        }
        Ok(next)
    }

    fn contact_force(&self, position: Vec2, radius: f64, obstacles: &[EntityState]) -> Vec2 {
        let mut total = Vec2::ZERO;
        for obstacle in obstacles {
            let offset = position - obstacle.position;
            let d = offset.norm();
            let overlap = radius + self.config.obstacle_radius - d;
            if overlap > 0.0 {
                let unit = if d > 0.0 {
                    offset * (1.0 / d)
                } else {
                    Vec2::new(1.0, 0.0)
                };
                total += unit * (self.config.contact_stiffness * overlap);
            }
        }
        total
    }

    /// Whether agents `a` and `b` overlap.
    pub fn colliding(&self, state: &WorldState, a: usize, b: usize) -> bool {
        let d = state.agent(a).position.distance(state.agent(b).position);
        d < self.config.radius_of(a) + self.config.radius_of(b)
    }

    /// Per-agent rewards of a state, red agents first.
    pub fn compute_rewards(&self, state: &WorldState) -> Vec<f64> {
        let cfg = &self.config;
        let nr = cfg.num_red;
        let ng = cfg.num_green;
        let greens = nr..nr + ng;

        let caught_by_any: usize = greens
            .clone()
            .filter(|&g| (0..nr).any(|r| self.colliding(state, r, g)))
            .count();

        let mut rewards = Vec::with_capacity(nr + ng);
        for r in 0..nr {
            let catches = if cfg.shared_catch_reward {
                caught_by_any
            } else {
                greens.clone().filter(|&g| self.colliding(state, r, g)).count()
            };
            let pos = state.red[r].position;
            let nearest = state
                .green
                .iter()
                .map(|g| pos.distance(g.position))
                .fold(f64::INFINITY, f64::min);
            rewards.push(cfg.catch_reward * catches as f64 - cfg.chase_shaping * nearest);
        }
        for g in greens {
            let hits = (0..nr).filter(|&r| self.colliding(state, r, g)).count();
            let pos = state.agent(g).position;
            rewards.push(
                cfg.caught_penalty * hits as f64
                    - cfg.water_shaping * pos.distance(state.water)
                    - cfg.boundary_scale * self.boundary_penalty(pos),
            );
        }
        rewards
    }

    /// Soft-wall penalty summed over both coordinates.
    pub fn boundary_penalty(&self, position: Vec2) -> f64 {
        let h = self.config.arena_half_width;
        [position.x, position.y]
            .into_iter()
            .map(|c| {
                let a = c.abs();
                if a < 0.9 * h {
                    0.0
                } else if a <= h {
                    (a - 0.9 * h) * 10.0
                } else {
                    (2.0 * (a - h)).exp().min(10.0) + 1.0
                }
            })
            .sum()
    }

    /// Observation of agent `index`:
    /// own velocity, own position, obstacle offsets, water offset,
    /// other agents' offsets (in agent order), green agents' velocities.
    pub fn observe(&self, state: &WorldState, index: usize) -> Result<Vec<f64>> {
        let n = state.num_agents();
        if index >= n {
            return Err(contract(format!("agent index {index} out of range for {n} agents")));
        }
        Ok(self.observe_unchecked(state, index))
    }

    fn observe_unchecked(&self, state: &WorldState, index: usize) -> Vec<f64> {
        let me = state.agent(index);
        let mut obs = Vec::with_capacity(self.config.observation_dim());
        let mut push = |v: Vec2| {
            obs.push(v.x);
            obs.push(v.y);
        };
        push(me.velocity);
        push(me.position);
        for o in &state.obstacles {
            push(o.position - me.position);
        }
        push(state.water - me.position);
        for (k, other) in state.agents().enumerate() {
            if k != index {
                push(other.position - me.position);
            }
        }
        for g in &state.green {
            push(g.velocity);
        }
        obs
    }

    pub fn observe_all(&self, state: &WorldState) -> Vec<Vec<f64>> {
        (0..state.num_agents())
            .map(|i| self.observe_unchecked(state, i))
            .collect()
    }

    fn check_shape(&self, state: &WorldState) -> Result<()> {
        let cfg = &self.config;
        if state.red.len() != cfg.num_red
            || state.green.len() != cfg.num_green
            || state.obstacles.len() != cfg.num_obstacles
        {
            return Err(contract("world state does not match the configured entity counts"));
        }
        Ok(())
    }
}

fn clamp_speed(v: Vec2, max_speed: f64) -> Vec2 {
    let speed = v.norm();
    if speed <= max_speed {
        return v;
    }
    let mut clamped = v * (max_speed / speed);
    // rounding can leave the rescaled norm a few ulps above the limit
    while clamped.norm() > max_speed {
        clamped = clamped * (1.0 - f64::EPSILON);
    }
    clamped
}
