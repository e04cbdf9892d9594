use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::buffer::Minibatch;
use super::phi::compute_phi;
use super::{JointLayout, TeamAssignment, TrainConfig};
use crate::env::{Action, Team, NUM_ACTIONS};
use crate::error::{contract, Result};
use crate::neural::{
    argmax, gumbel_softmax_sample, greedy_one_hot, one_hot, relaxed_sample, sample_gumbel,
    softmax_backward, soft_update, Adam, Gradients, Mlp,
};

/// One agent's actor and critic, their target copies, and optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentLearner {
    pub team: Team,
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
}

impl AgentLearner {
    pub fn new<R: Rng + ?Sized>(
        team: Team,
        layout: &JointLayout,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let actor_sizes: Vec<usize> = std::iter::once(layout.obs_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(NUM_ACTIONS))
            .collect();
        let critic_sizes: Vec<usize> = std::iter::once(layout.critic_input_dim())
            .chain(hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        let actor = Mlp::with_rng(&actor_sizes, rng)?;
        let critic = Mlp::with_rng(&critic_sizes, rng)?;
        Ok(Self::from_networks(team, actor, critic))
    }

    /// Wraps online networks; targets start as exact copies.
    pub fn from_networks(team: Team, actor: Mlp, critic: Mlp) -> Self {
        Self {
            team,
            actor_opt: Adam::new(&actor),
            critic_opt: Adam::new(&critic),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
        }
    }

    pub fn soft_update_targets(&mut self, tau: f64) -> Result<()> {
        soft_update(&mut self.target_actor, &self.actor, tau)?;
        soft_update(&mut self.target_critic, &self.critic, tau)
    }
}

/// Picks every agent's action from its own observation.
///
/// Exploring draws a Gumbel-softmax sample; otherwise the arg-max logit is
/// taken and `rng` is left untouched.
pub fn select_actions<R: Rng + ?Sized>(
    learners: &[AgentLearner],
    observations: &[Vec<f64>],
    explore: bool,
    temperature: f64,
    rng: &mut R,
) -> Result<Vec<(Action, Vec<f64>)>> {
    if learners.len() != observations.len() {
        return Err(contract(format!(
            "{} learners but {} observations",
            learners.len(),
            observations.len()
        )));
    }
    learners
        .iter()
        .zip(observations)
        .map(|(l, o)| {
            let logits = l.actor.predict(o)?;
            let indicator = if explore {
                gumbel_softmax_sample(&logits, temperature, rng)?.hard
            } else {
                greedy_one_hot(&logits)
            };
            Ok((Action::from_index(argmax(&indicator))?, indicator))
        })
        .collect()
}

fn critic_input(obs: &Array2<f64>, actions: &Array2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[obs.view(), actions.view()]).expect("rows agree")
}

fn check_batch(batch: &Minibatch, layout: &JointLayout) -> Result<()> {
    if batch.obs.ncols() != layout.joint_obs_dim()
        || batch.actions.ncols() != layout.joint_action_dim()
        || batch.rewards.ncols() != layout.num_agents
        || batch.is_empty()
    {
        return Err(contract("minibatch shape does not match the joint layout"));
    }
    Ok(())
}

/// `Q'_i(x', μ'_1(o'_1), …, μ'_N(o'_N))` with noise-free target-actor actions.
fn target_bootstrap(
    batch: &Minibatch,
    learners: &[AgentLearner],
    layout: &JointLayout,
    agent: usize,
) -> Result<Array1<f64>> {
    let s = batch.len();
    let mut next_actions = Array2::zeros((s, layout.joint_action_dim()));
    for (k, l) in learners.iter().enumerate() {
        let logits = l
            .target_actor
            .predict_batch(batch.next_obs.slice(s![.., layout.obs_cols(k)]))?;
        for (row, lg) in logits.rows().into_iter().enumerate() {
            let best = argmax(lg.as_slice().expect("row-major"));
            next_actions[[row, layout.action_cols(k).start + best]] = 1.0;
        }
    }
    let input = critic_input(&batch.next_obs, &next_actions);
    let q = learners[agent].target_critic.predict_batch(input.view())?;
    Ok(q.column(0).to_owned())
}

fn bootstrap_mask(batch: &Minibatch, config: &TrainConfig) -> Array1<f64> {
    if config.bootstrap_on_timeout {
        Array1::ones(batch.len())
    } else {
        batch.done.mapv(|d| 1.0 - d)
    }
}

/// Critic targets for agent `agent` with the cooperation bonus:
/// `y_j = φ_i^j·r_i^j + γ·mask_j·Q'_i(…)`, `φ_i^j` evaluated per sample from
/// the team's stored rewards.
pub fn compute_targets(
    batch: &Minibatch,
    learners: &[AgentLearner],
    layout: &JointLayout,
    teams: &TeamAssignment,
    config: &TrainConfig,
    agent: usize,
) -> Result<Array1<f64>> {
    check_batch(batch, layout)?;
    if agent >= learners.len() {
        return Err(contract(format!("agent {agent} out of range")));
    }
    let q_next = target_bootstrap(batch, learners, layout, agent)?;
    let mask = bootstrap_mask(batch, config);
    let gated = config.bonus_applies(teams.team(agent));
    let mates = teams.teammates_of(agent);
    let mut y = Array1::zeros(batch.len());
    let mut team_rewards = vec![0.0; mates.len()];
    for j in 0..batch.len() {
        let phi = if gated {
            for (slot, &m) in team_rewards.iter_mut().zip(&mates) {
                *slot = batch.rewards[[j, m]];
            }
            compute_phi(&team_rewards, config.cooperation_threshold, config.cooperation_factor)?
        } else {
            1.0
        };
        y[j] = phi * batch.rewards[[j, agent]] + config.gamma * mask[j] * q_next[j];
    }
    Ok(y)
}

/// Plain MADDPG targets `y_j = r_i^j + γ·mask_j·Q'_i(…)`; no cooperation gate anywhere.
pub fn compute_targets_reference(
    batch: &Minibatch,
    learners: &[AgentLearner],
    layout: &JointLayout,
    config: &TrainConfig,
    agent: usize,
) -> Result<Array1<f64>> {
    check_batch(batch, layout)?;
    if agent >= learners.len() {
        return Err(contract(format!("agent {agent} out of range")));
    }
    let q_next = target_bootstrap(batch, learners, layout, agent)?;
    let mask = bootstrap_mask(batch, config);
    let r = batch.rewards.column(agent);
    Ok(&r + &(config.gamma * &mask * &q_next))
}

/// Mean squared critic error against fixed targets and its parameter gradient.
pub fn critic_loss_gradient(
    critic: &Mlp,
    batch: &Minibatch,
    targets: &Array1<f64>,
) -> Result<(f64, Gradients)> {
    if targets.len() != batch.len() {
        return Err(contract("one target per sample required"));
    }
    let input = critic_input(&batch.obs, &batch.actions);
    let (q, cache) = critic.forward_batch(input.view())?;
    let s = batch.len() as f64;
    let residual = &q.column(0) - targets;
    let loss = residual.dot(&residual) / s;
    let grad_q = (residual * (2.0 / s)).insert_axis(Axis(1));
    let grads = critic.backward(&cache, grad_q.view())?;
    Ok((loss, grads))
}

/// One Adam step on the critic; returns the loss before the step.
pub fn critic_update(
    learner: &mut AgentLearner,
    batch: &Minibatch,
    targets: &Array1<f64>,
    lr: f64,
) -> Result<f64> {
    let (loss, grads) = critic_loss_gradient(&learner.critic, batch, targets)?;
    learner.critic_opt.step(&mut learner.critic, &grads, lr)?;
    Ok(loss)
}

/// Objective `J = −mean_j Q_i(x_j, a_1^j, …, â_i^j, …, a_N^j)` and its actor
/// gradient, where `â_i^j` is the agent's relaxed policy sample at `o_i^j`
/// under the given Gumbel noise (`S × 4`). Other agents keep their stored actions.
pub fn actor_objective_gradient(
    learner: &AgentLearner,
    agent: usize,
    layout: &JointLayout,
    batch: &Minibatch,
    noise: ArrayView2<f64>,
    temperature: f64,
    straight_through: bool,
) -> Result<(f64, Gradients)> {
    check_batch(batch, layout)?;
    let s = batch.len();
    if noise.dim() != (s, NUM_ACTIONS) {
        return Err(contract("actor noise must be one row of 4 per sample"));
    }
    let own_obs = batch.obs.slice(s![.., layout.obs_cols(agent)]);
    let (logits, actor_cache) = learner.actor.forward_batch(own_obs)?;

    let mut relaxed = Array2::zeros((s, NUM_ACTIONS));
    let mut actions = batch.actions.clone();
    for j in 0..s {
        let lg = logits.row(j).to_vec();
        let p = relaxed_sample(&lg, &noise.row(j).to_vec(), temperature);
        let fed = if straight_through {
            one_hot(argmax(&p), NUM_ACTIONS)
        } else {
            p.clone()
        };
        for c in 0..NUM_ACTIONS {
            relaxed[[j, c]] = p[c];
            actions[[j, layout.action_cols(agent).start + c]] = fed[c];
        }
    }
    let input = critic_input(&batch.obs, &actions);
    let (q, critic_cache) = learner.critic.forward_batch(input.view())?;
    let objective = -q.column(0).sum() / s as f64;

    let upstream = Array2::from_elem((s, 1), -1.0 / s as f64);
    let critic_grads = learner.critic.backward(&critic_cache, upstream.view())?;
    let grad_action = critic_grads
        .input
        .slice(s![.., layout.critic_action_cols(agent)]);
    let mut grad_logits = Array2::zeros((s, NUM_ACTIONS));
    for j in 0..s {
        let p = relaxed.row(j).to_vec();
        let g = softmax_backward(&p, &grad_action.row(j).to_vec(), temperature);
        for c in 0..NUM_ACTIONS {
            grad_logits[[j, c]] = g[c];
        }
    }
    let grads = learner.actor.backward(&actor_cache, grad_logits.view())?;
    Ok((objective, grads))
}

/// One Adam step on the actor along the sampled policy gradient; returns the gradient norm.
pub fn actor_update<R: Rng + ?Sized>(
    learner: &mut AgentLearner,
    agent: usize,
    layout: &JointLayout,
    batch: &Minibatch,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<f64> {
    let noise = Array2::from_shape_simple_fn((batch.len(), NUM_ACTIONS), || sample_gumbel(rng));
    let (_, grads) = actor_objective_gradient(
        learner,
        agent,
        layout,
        batch,
        noise.view(),
        config.temperature,
        config.straight_through,
    )?;
    learner.actor_opt.step(&mut learner.actor, &grads, config.actor_lr)?;
    Ok(grads.norm())
}
