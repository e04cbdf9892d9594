//! Browser bindings for the interactive demo page in `www/`.
//!
//! Three operations are exposed: the cooperation gate on its own, training a
//! small learner pair (baseline and bonus) in chunks, and replaying a greedy
//! episode of either learner for the canvas.

use coop_maddpg::env::{Action, WorldConfig, WorldState};
use coop_maddpg::maddpg::{select_actions, TrainConfig, Trainer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

fn js_err(e: coop_maddpg::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Cooperation factor for one agent given its team's rewards (own included).
#[wasm_bindgen]
pub fn phi(team_rewards: &[f64], threshold: u32, factor: f64) -> Result<f64, JsError> {
    coop_maddpg::compute_phi(team_rewards, threshold, factor).map_err(js_err)
}

/// Settings small enough to train at interactive speed in a browser tab.
fn demo_config(seed: u64, bonus: bool, threshold: u32, factor: f64) -> TrainConfig {
    TrainConfig {
        episodes: usize::MAX,
        batch_size: 256,
        warmup: 256,
        update_every: 50,
        buffer_capacity: 100_000,
        hidden_sizes: vec![32, 32],
        bonus_enabled: bonus,
        cooperation_threshold: threshold,
        cooperation_factor: factor,
        seed,
        ..TrainConfig::default()
    }
}

/// One training run living in the page.
#[wasm_bindgen]
pub struct Run {
    trainer: Trainer,
    red: Vec<f64>,
    green: Vec<f64>,
}

#[wasm_bindgen]
impl Run {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, bonus: bool, threshold: u32, factor: f64) -> Result<Run, JsError> {
        let trainer = Trainer::new(demo_config(seed.into(), bonus, threshold, factor), WorldConfig::default())
            .map_err(js_err)?;
        Ok(Run {
            trainer,
            red: Vec::new(),
            green: Vec::new(),
        })
    }

    /// Trains `episodes` more episodes; returns the episodes done so far.
    pub fn train(&mut self, episodes: usize) -> Result<usize, JsError> {
        for _ in 0..episodes {
            let row = self.trainer.run_episode().map_err(js_err)?;
            self.red.push(row.red_team);
            self.green.push(row.green_team);
        }
        Ok(self.trainer.episodes_done())
    }

    #[wasm_bindgen(js_name = redTeam)]
    pub fn red_team(&self) -> Vec<f64> {
        self.red.clone()
    }

    #[wasm_bindgen(js_name = greenTeam)]
    pub fn green_team(&self) -> Vec<f64> {
        self.green.clone()
    }

    /// Greedy episode from the reset for `seed`.
    ///
    /// Returns one frame per state (reset included); a frame lists `x, y` of
    /// every red agent, then every green agent, then every obstacle, then the water point.
    pub fn replay(&self, seed: u32) -> Result<Vec<f64>, JsError> {
        let world = self.trainer.world();
        let (mut state, mut obs) = world.reset(seed.into()).map_err(js_err)?;
        let mut frames = Vec::new();
        push_frame(&mut frames, &state);
        // greedy selection never touches the rng
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        loop {
            let picked = select_actions(self.trainer.learners(), &obs, false, 1.0, &mut rng).map_err(js_err)?;
            let actions: Vec<Action> = picked.into_iter().map(|(a, _)| a).collect();
            let out = world.step(&state, &actions).map_err(js_err)?;
            push_frame(&mut frames, &out.state);
            if out.done {
                break;
            }
            state = out.state;
            obs = out.observations;
        }
        Ok(frames)
    }
}

fn push_frame(frames: &mut Vec<f64>, state: &WorldState) {
    for e in state.agents().chain(&state.obstacles) {
        frames.extend([e.position.x, e.position.y]);
    }
    frames.extend([state.water.x, state.water.y]);
}

/// `[num_red, num_green, num_obstacles, red_radius, green_radius, obstacle_radius, arena_half_width]`
/// of the demo world.
#[wasm_bindgen]
pub fn world_layout() -> Vec<f64> {
    let c = WorldConfig::default();
    vec![
        c.num_red as f64,
        c.num_green as f64,
        c.num_obstacles as f64,
        c.red_radius,
        c.green_radius,
        c.obstacle_radius,
        c.arena_half_width,
    ]
}

/// Frame length in numbers, for slicing `Run::replay` output.
#[wasm_bindgen]
pub fn frame_len() -> usize {
    let c = WorldConfig::default();
    2 * (c.num_agents() + c.num_obstacles + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_has_one_frame_per_state() {
        let run = Run::new(1, true, 1, 2.0).ok().unwrap();
        let frames = run.replay(5).ok().unwrap();
        let steps = WorldConfig::default().episode_length;
        assert_eq!(frames.len(), frame_len() * (steps + 1));
        // obstacles never move
        let obstacles = |f: usize| {
            let start = f * frame_len() + 2 * 6;
            frames[start..start + 6].to_vec()
        };
        assert_eq!(obstacles(0), obstacles(steps));
    }

    #[test]
    fn training_records_team_curves() {
        let mut run = Run::new(2, false, 1, 2.0).ok().unwrap();
        assert_eq!(run.train(3).ok(), Some(3));
        assert_eq!(run.red_team().len(), 3);
        assert_eq!(run.green_team().len(), 3);
    }

    #[test]
    fn gate_matches_core() {
        assert_eq!(phi(&[0.5, 2.0, -1.0, 3.0], 1, 2.0).ok(), Some(2.0));
        assert_eq!(phi(&[-1.0, 0.1], 1, 2.0).ok(), Some(1.0));
        assert_eq!(world_layout()[0] as usize, WorldConfig::default().num_red);
    }
}
