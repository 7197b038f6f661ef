use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::replay::Batch;
use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::nn::{soft_update, Activation, Adam, AdamConfig, GradBundle, Mlp};
use crate::rng::{derive_seed, SimRng};
use crate::world::AgentAction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Maddpg,
    Ddpg,
}

/// Which observations a centralized critic conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriticObs {
    /// Only the critic owner's observation, `Q_i(s_i, a_1..a_N)`.
    Own,
    /// Every bodyguard's observation, `Q_i(s_1..s_N, a_1..a_N)`.
    All,
}

/// Shape of a critic's input vector.
///
/// * MADDPG, `All`: `[s_1, .., s_N, a_1, .., a_N]`
/// * MADDPG, `Own`: `[s_i, a_1, .., a_N]`
/// * DDPG: `[s_i, a_i]`
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CriticLayout {
    pub algorithm: Algorithm,
    pub critic_obs: CriticObs,
    pub n_agents: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
}

impl CriticLayout {
    fn obs_blocks(&self) -> usize {
        match (self.algorithm, self.critic_obs) {
            (Algorithm::Maddpg, CriticObs::All) => self.n_agents,
            _ => 1,
        }
    }

    /// Agents whose actions appear in agent `i`'s critic input.
    pub fn action_agents(&self, i: usize) -> std::ops::Range<usize> {
        match self.algorithm {
            Algorithm::Maddpg => 0..self.n_agents,
            Algorithm::Ddpg => i..i + 1,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.obs_blocks() * self.obs_dim + self.action_agents(0).len() * self.act_dim
    }

    /// Column where agent `i`'s own action starts in its critic input.
    pub fn own_action_offset(&self, i: usize) -> usize {
        let obs = self.obs_blocks() * self.obs_dim;
        match self.algorithm {
            Algorithm::Maddpg => obs + i * self.act_dim,
            Algorithm::Ddpg => obs,
        }
    }

    fn obs_agents(&self, i: usize) -> std::ops::Range<usize> {
        if self.obs_blocks() == self.n_agents {
            0..self.n_agents
        } else {
            i..i + 1
        }
    }

    fn check(&self, i: usize, obs: usize, acts: usize) -> Result<()> {
        if i >= self.n_agents {
            return Err(Error::contract(format!(
                "agent {i} out of range for {} bodyguards",
                self.n_agents
            )));
        }
        if obs != self.n_agents || acts != self.n_agents {
            return Err(Error::contract(format!(
                "critic input needs {} observations and actions, got {obs} and {acts}",
                self.n_agents
            )));
        }
        Ok(())
    }

    /// Builds agent `i`'s critic input for a whole batch.
    pub fn assemble(&self, i: usize, obs: &[ArrayView2<'_, f64>], acts: &[ArrayView2<'_, f64>]) -> Result<Array2<f64>> {
        self.check(i, obs.len(), acts.len())?;
        let blocks: Vec<ArrayView2<'_, f64>> = self
            .obs_agents(i)
            .map(|j| obs[j])
            .chain(self.action_agents(i).map(|j| acts[j]))
            .collect();
        concatenate(Axis(1), &blocks).map_err(|e| Error::contract(format!("critic input: {e}")))
    }
}

/// Agent `i`'s critic input for a single joint step.
pub fn critic_input(layout: &CriticLayout, agent_index: usize, observations: &[&[f64]], actions: &[&[f64]]) -> Result<Vec<f64>> {
    layout.check(agent_index, observations.len(), actions.len())?;
    let mut v = Vec::with_capacity(layout.input_dim());
    for j in layout.obs_agents(agent_index) {
        v.extend_from_slice(observations[j]);
    }
    for j in layout.action_agents(agent_index) {
        v.extend_from_slice(actions[j]);
    }
    if v.len() != layout.input_dim() {
        return Err(Error::contract(format!(
            "critic input has length {}, layout expects {}",
            v.len(),
            layout.input_dim()
        )));
    }
    Ok(v)
}

/// Live and target networks of one learner plus their optimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentNets {
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub noise_scale: f64,
}

impl AgentNets {
    pub fn soft_update_targets(&mut self, tau: f64) -> Result<()> {
        soft_update(&mut self.target_actor, &self.actor, tau)?;
        soft_update(&mut self.target_critic, &self.critic, tau)
    }
}

/// All bodyguard learners. With `shared` set a single set of networks
/// serves every bodyguard.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerBundle {
    pub layout: CriticLayout,
    pub shared: bool,
    pub agents: Vec<AgentNets>,
}

impl LearnerBundle {
    pub fn new(layout: CriticLayout, hidden: &[usize], adam: AdamConfig, shared: bool, seed: u64) -> Result<Self> {
        let slots = if shared { 1 } else { layout.n_agents };
        let sizes = |input: usize, output: usize| {
            std::iter::once(input)
                .chain(hidden.iter().copied())
                .chain(std::iter::once(output))
                .collect::<Vec<_>>()
        };
        let agents = (0..slots)
            .map(|slot| {
                let actor = Mlp::init(
                    &sizes(layout.obs_dim, layout.act_dim),
                    Activation::Tanh,
                    derive_seed(seed, 2 * slot as u64, 0),
                )?;
                let critic = Mlp::init(
                    &sizes(layout.input_dim(), 1),
                    Activation::Identity,
                    derive_seed(seed, 2 * slot as u64 + 1, 0),
                )?;
                Ok(AgentNets {
                    actor_opt: Adam::new(&actor, adam),
                    critic_opt: Adam::new(&critic, adam),
                    target_actor: actor.clone(),
                    target_critic: critic.clone(),
                    actor,
                    critic,
                    noise_scale: 0.0,
                })
            })
            .collect::<Result<_>>()?;
        Ok(LearnerBundle {
            layout,
            shared,
            agents,
        })
    }

    fn slot(&self, agent: usize) -> usize {
        if self.shared {
            0
        } else {
            agent
        }
    }

    pub fn nets(&self, agent: usize) -> &AgentNets {
        &self.agents[self.slot(agent)]
    }

    pub fn nets_mut(&mut self, agent: usize) -> &mut AgentNets {
        let slot = self.slot(agent);
        &mut self.agents[slot]
    }

    pub fn set_noise_scale(&mut self, scale: f64) {
        for a in &mut self.agents {
            a.noise_scale = scale;
        }
    }

    pub fn soft_update_all(&mut self, tau: f64) -> Result<()> {
        self.agents.iter_mut().try_for_each(|a| a.soft_update_targets(tau))
    }

    pub fn is_finite(&self) -> bool {
        self.agents.iter().all(|a| {
            a.actor.is_finite() && a.critic.is_finite() && a.target_actor.is_finite() && a.target_critic.is_finite()
        })
    }
}

/// `pi(s)` plus Gaussian noise of standard deviation `noise_scale`, clamped to
/// `[-1, 1]`. No randomness is drawn when `noise_scale` is 0.
pub fn select_action(actor: &Mlp, observation: &[f64], noise_scale: f64, rng: &mut SimRng) -> Result<AgentAction> {
    let (mut out, _) = actor.forward(observation)?;
    if noise_scale > 0.0 {
        for v in &mut out {
            let z: f64 = StandardNormal.sample(rng);
            *v += noise_scale * z;
        }
    }
    for v in &mut out {
        *v = v.clamp(-1.0, 1.0);
    }
    AgentAction::from_flat(&out)
}

/// A differentiable action-value function over critic inputs.
pub trait ActionValue {
    /// Value of every row and the gradient of each row's value with respect
    /// to that row.
    fn value_and_input_grad(&self, input: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)>;
}

impl ActionValue for Mlp {
    fn value_and_input_grad(&self, input: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
        let (q, cache) = self.forward_batch(input)?;
        if q.ncols() != 1 {
            return Err(Error::contract("critic must have a single output"));
        }
        let ones = Array2::ones(q.raw_dim());
        let grad = self.input_gradient(&cache, ones.view())?;
        Ok((q.column(0).to_owned(), grad))
    }
}

fn views(ms: &[Array2<f64>]) -> Vec<ArrayView2<'_, f64>> {
    ms.iter().map(|m| m.view()).collect()
}

/// One critic regression step for agent `i`. Returns the loss before the step.
///
/// `y = r_i + gamma (1 - done) Q'_i(s', a'_1..a'_N)` with `a'_j = pi'_j(s'_j)`,
/// loss `mean (Q_i(s, a) - y)^2`.
pub fn critic_update(bundle: &mut LearnerBundle, batch: &Batch, agent_index: usize, cfg: &TrainConfig) -> Result<f64> {
    let layout = bundle.layout;
    let i = agent_index;
    let b = batch.size();
    if batch.n_agents() != layout.n_agents || i >= layout.n_agents {
        return Err(Error::contract("batch does not match the learner layout"));
    }

    let mut next_actions = batch.actions.clone();
    for j in layout.action_agents(i) {
        next_actions[j] = bundle
            .nets(j)
            .target_actor
            .predict_batch(batch.next_observations[j].view())?;
    }
    let next_input = layout.assemble(i, &views(&batch.next_observations), &views(&next_actions))?;
    let input = layout.assemble(i, &views(&batch.observations), &views(&batch.actions))?;

    let nets = bundle.nets_mut(i);
    let q_next = nets.target_critic.predict_batch(next_input.view())?;
    let reward = batch.rewards.column(i);
    let (q, cache) = nets.critic.forward_batch(input.view())?;

    let mut dq = Array2::zeros((b, 1));
    let mut loss = 0.0;
    for r in 0..b {
        let y = reward[r] + cfg.gamma * (1.0 - batch.done[r]) * q_next[[r, 0]];
        let diff = q[[r, 0]] - y;
        loss += diff * diff;
        dq[[r, 0]] = 2.0 * diff / b as f64;
    }
    loss /= b as f64;

    let mut grads = nets.critic.backward(&cache, dq.view())?;
    grads.clip_global_norm(cfg.grad_clip);
    nets.critic_opt.step(&mut nets.critic, &grads)?;
    Ok(loss)
}

/// Objective `J = mean_b Q(.., pi(s_i), ..) - penalty * mean(z^2)` and its
/// gradient with respect to the actor's parameters, where `z` is the actor's
/// output pre-activation. Other agents' action slots come from the batch.
/// Returns `mean_b Q` alongside the gradient.
pub fn actor_objective_grad(
    actor: &Mlp,
    critic: &dyn ActionValue,
    layout: &CriticLayout,
    agent_index: usize,
    batch: &Batch,
    penalty: f64,
) -> Result<(f64, GradBundle)> {
    let i = agent_index;
    let b = batch.size() as f64;
    let (own, cache) = actor.forward_batch(batch.observations[i].view())?;
    let mut acts = views(&batch.actions);
    acts[i] = own.view();
    let input = layout.assemble(i, &views(&batch.observations), &acts)?;
    let (q, dinput) = critic.value_and_input_grad(input.view())?;
    let offset = layout.own_action_offset(i);
    let d_own = dinput.slice(s![.., offset..offset + layout.act_dim]).mapv(|g| g / b);
    let grads = if penalty == 0.0 {
        actor.backward(&cache, d_own.view())?
    } else {
        let z = actor.output_preactivation(&cache)?;
        let scale = -2.0 * penalty / z.len() as f64;
        actor.backward_with_preactivation(&cache, d_own.view(), z.mapv(|v| scale * v).view())?
    };
    Ok((q.mean().unwrap_or(0.0), grads))
}

/// One gradient-ascent step on `J` for `actor`. Returns `J` before the step.
pub fn actor_step(
    actor: &mut Mlp,
    opt: &mut Adam,
    critic: &dyn ActionValue,
    layout: &CriticLayout,
    agent_index: usize,
    batch: &Batch,
    penalty: f64,
    grad_clip: f64,
) -> Result<f64> {
    let (objective, mut grads) = actor_objective_grad(actor, critic, layout, agent_index, batch, penalty)?;
    for l in &mut grads.layers {
        l.weight.mapv_inplace(|g| -g);
        l.bias.mapv_inplace(|g| -g);
    }
    grads.clip_global_norm(grad_clip);
    opt.step(actor, &grads)?;
    Ok(objective)
}

/// Policy step for agent `i` through its own critic.
pub fn actor_update(bundle: &mut LearnerBundle, batch: &Batch, agent_index: usize, cfg: &TrainConfig) -> Result<f64> {
    let layout = bundle.layout;
    if batch.n_agents() != layout.n_agents || agent_index >= layout.n_agents {
        return Err(Error::contract("batch does not match the learner layout"));
    }
    let AgentNets {
        actor,
        critic,
        actor_opt,
        ..
    } = bundle.nets_mut(agent_index);
    actor_step(
        actor,
        actor_opt,
        &*critic,
        &layout,
        agent_index,
        batch,
        cfg.actor_preactivation_penalty,
        cfg.grad_clip,
    )
}
