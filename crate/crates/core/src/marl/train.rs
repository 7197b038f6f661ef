use serde::{Deserialize, Serialize};

use super::learner::{
    actor_update, critic_update, select_action, Algorithm, CriticLayout, CriticObs, LearnerBundle,
};
use super::replay::{ReplayBuffer, Transition};
use crate::error::{Error, Result};
use crate::nn::AdamConfig;
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::scenario::{Episode, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub episodes: usize,
    /// Must equal the scenario horizon.
    pub steps_per_episode: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub tau: f64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Global gradient-norm clip applied before every optimizer step.
    pub grad_clip: f64,
    pub hidden_layers: Vec<usize>,
    pub noise_start: f64,
    pub noise_end: f64,
    /// Fraction of the episodes over which the noise anneals linearly.
    pub noise_decay_fraction: f64,
    /// Environment steps between update rounds.
    pub update_every: usize,
    /// Defaults to `batch_size` when absent.
    pub warmup_transitions: Option<usize>,
    pub buffer_capacity: usize,
    pub algorithm: Algorithm,
    pub critic_obs: CriticObs,
    pub share_weights: bool,
    pub team_average_reward: bool,
    /// Whether the last step of an episode is stored as terminal. When false
    /// the critic bootstraps through the time limit, since the observation
    /// carries no clock.
    pub horizon_is_terminal: bool,
    /// Weight of the mean squared actor output pre-activation subtracted from
    /// the actor objective; keeps the tanh output away from saturation.
    pub actor_preactivation_penalty: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 10_000,
            steps_per_episode: 25,
            batch_size: 1024,
            gamma: 0.95,
            tau: 0.01,
            learning_rate: 1e-2,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            grad_clip: 0.5,
            hidden_layers: vec![64, 64],
            noise_start: 0.3,
            noise_end: 0.05,
            noise_decay_fraction: 0.6,
            update_every: 100,
            warmup_transitions: None,
            buffer_capacity: 1_000_000,
            algorithm: Algorithm::Maddpg,
            critic_obs: CriticObs::All,
            share_weights: false,
            team_average_reward: false,
            horizon_is_terminal: true,
            actor_preactivation_penalty: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| Err(Error::config(format!("train.{field}"), reason));
        if self.steps_per_episode == 0 {
            return bad("steps_per_episode", "must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be >= 1");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma", "must lie in [0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau", "must lie in (0, 1]");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate", "must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) {
            return bad("adam_beta1", "must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam_beta2", "must lie in [0, 1)");
        }
        if !(self.adam_epsilon.is_finite() && self.adam_epsilon > 0.0) {
            return bad("adam_epsilon", "must be positive");
        }
        if !(self.grad_clip.is_finite() && self.grad_clip > 0.0) {
            return bad("grad_clip", "must be positive");
        }
        if let Some(i) = self.hidden_layers.iter().position(|&h| h == 0) {
            return Err(Error::config(format!("train.hidden_layers[{i}]"), "must be positive"));
        }
        if !(self.noise_start.is_finite() && self.noise_start >= 0.0) {
            return bad("noise_start", "must be >= 0");
        }
        if !(self.noise_end.is_finite() && self.noise_end >= 0.0) {
            return bad("noise_end", "must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.noise_decay_fraction) {
            return bad("noise_decay_fraction", "must lie in [0, 1]");
        }
        if !(self.actor_preactivation_penalty.is_finite() && self.actor_preactivation_penalty >= 0.0) {
            return bad("actor_preactivation_penalty", "must be >= 0");
        }
        if self.update_every == 0 {
            return bad("update_every", "must be >= 1");
        }
        if self.buffer_capacity < self.batch_size {
            return bad("buffer_capacity", "must be at least batch_size");
        }
        Ok(())
    }

    pub fn warmup(&self) -> usize {
        self.warmup_transitions.unwrap_or(self.batch_size).max(self.batch_size)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }

    pub fn layout(&self, scenario: &ScenarioConfig) -> CriticLayout {
        CriticLayout {
            algorithm: self.algorithm,
            critic_obs: self.critic_obs,
            n_agents: scenario.n_bodyguards,
            obs_dim: scenario.observation_len(),
            act_dim: scenario.action_len(),
        }
    }

    /// Fresh, untrained learners for `scenario`.
    pub fn new_bundle(&self, scenario: &ScenarioConfig) -> Result<LearnerBundle> {
        LearnerBundle::new(
            self.layout(scenario),
            &self.hidden_layers,
            self.adam(),
            self.share_weights,
            derive_seed(self.seed, stream::TRAIN_INIT, 0),
        )
    }
}

/// Exploration noise for `episode`: linear from `noise_start` to `noise_end`
/// over the first `noise_decay_fraction` of the run, then flat.
pub fn noise_scale_at(cfg: &TrainConfig, episode: usize) -> f64 {
    let decay = (cfg.noise_decay_fraction * cfg.episodes as f64).ceil();
    if decay <= 0.0 {
        return cfg.noise_end;
    }
    let frac = episode as f64 / decay;
    if frac >= 1.0 {
        return cfg.noise_end;
    }
    cfg.noise_start + (cfg.noise_end - cfg.noise_start) * frac
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    /// Episode return averaged over bodyguards.
    pub mean_return: f64,
    pub cumulative_threat: f64,
    /// Mean of `-J` over the episode's actor updates.
    pub actor_loss: Option<f64>,
    /// Mean critic loss over the episode's updates.
    pub critic_loss: Option<f64>,
    pub noise_scale: f64,
}

pub fn train(scenario: &ScenarioConfig, cfg: &TrainConfig) -> Result<(LearnerBundle, Vec<EpisodeLog>)> {
    let mut log = Vec::with_capacity(cfg.episodes);
    let bundle = train_with(scenario, cfg, |rec, _| {
        log.push(rec.clone());
        Ok(())
    })?;
    Ok((bundle, log))
}

/// Runs the training loop, calling `on_episode` after every episode.
pub fn train_with<F>(scenario: &ScenarioConfig, cfg: &TrainConfig, mut on_episode: F) -> Result<LearnerBundle>
where
    F: FnMut(&EpisodeLog, &LearnerBundle) -> Result<()>,
{
    scenario.validate()?;
    cfg.validate()?;
    if cfg.steps_per_episode != scenario.horizon {
        return Err(Error::config(
            "train.steps_per_episode",
            format!("must equal scenario.horizon ({})", scenario.horizon),
        ));
    }

    let mut bundle = cfg.new_bundle(scenario)?;
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity)?;
    let mut rng = rng_from_seed(derive_seed(cfg.seed, stream::TRAIN_EXPLORATION, 0));
    let n = scenario.n_bodyguards;
    let warmup = cfg.warmup();
    let mut total_steps: u64 = 0;

    for ep in 0..cfg.episodes {
        let noise = noise_scale_at(cfg, ep);
        bundle.set_noise_scale(noise);
        let mut episode = Episode::new(scenario, derive_seed(cfg.seed, stream::TRAIN_EPISODE, ep as u64))?;
        let mut returns = vec![0.0; n];
        let mut threat = 0.0;
        let (mut actor_losses, mut critic_losses) = (Vec::new(), Vec::new());
        let mut observations = episode.bodyguard_observations();

        while !episode.is_done() {
            let actions = (0..n)
                .map(|g| select_action(&bundle.nets(g).actor, &observations[g], noise, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let flat_actions = actions.iter().map(|a| a.to_flat()).collect();
            let record = episode.step(actions)?;
            let mut rewards = record.rewards.clone();
            threat += record.threat;
            if cfg.team_average_reward {
                let mean = rewards.iter().sum::<f64>() / n as f64;
                rewards.fill(mean);
            }
            for (acc, r) in returns.iter_mut().zip(&rewards) {
                *acc += r;
            }
            let next_observations = episode.bodyguard_observations();
            buffer.push(Transition {
                observations: std::mem::replace(&mut observations, next_observations.clone()),
                actions: flat_actions,
                rewards,
                next_observations,
                done: cfg.horizon_is_terminal && episode.is_done(),
            });
            total_steps += 1;

            if buffer.len() >= warmup && total_steps % cfg.update_every as u64 == 0 {
                for i in 0..n {
                    let batch = buffer.sample(cfg.batch_size, &mut rng)?;
                    let c = critic_update(&mut bundle, &batch, i, cfg)?;
                    let a = actor_update(&mut bundle, &batch, i, cfg)?;
                    if !c.is_finite() || !a.is_finite() {
                        return Err(Error::Diverged {
                            episode: ep,
                            message: format!("bodyguard {i}: critic loss {c}, objective {a}"),
                        });
                    }
                    critic_losses.push(c);
                    actor_losses.push(-a);
                }
                bundle.soft_update_all(cfg.tau)?;
            }
        }

        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        let rec = EpisodeLog {
            episode: ep,
            mean_return: returns.iter().sum::<f64>() / n as f64,
            cumulative_threat: threat,
            actor_loss: mean(&actor_losses),
            critic_loss: mean(&critic_losses),
            noise_scale: noise,
        };
        on_episode(&rec, &bundle)?;
    }
    Ok(bundle)
}
