//! Noise-free evaluation of bodyguard controllers and the reference baselines.

use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::marl::{select_action, LearnerBundle};
use crate::rng::{derive_seed, rng_from_seed, stream, SimRng};
use crate::scenario::{run_episode, BodyguardController, Episode, EpisodeTrace, ScenarioConfig};
use crate::world::AgentAction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single value.
    pub stddev: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        if n == 0 {
            return Summary {
                mean: f64::NAN,
                median: f64::NAN,
                stddev: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        let stddev = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Summary { mean, median, stddev }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Which controller was evaluated (`policy`, `random`, ...).
    pub controller: String,
    pub seed: u64,
    pub episode_seeds: Vec<u64>,
    pub cumulative_threat: Vec<f64>,
    /// Episode return averaged over bodyguards.
    pub mean_reward: Vec<f64>,
    /// Fraction of steps whose mean bodyguard-VIP distance lies in the band.
    pub band_fraction: Vec<f64>,
    pub threat_summary: Summary,
    pub reward_summary: Summary,
    pub band_summary: Summary,
}

impl EvalReport {
    /// Fraction of all evaluated steps (pooled over episodes) with the mean
    /// bodyguard-VIP distance inside the band. Episodes share one horizon.
    pub fn pooled_band_fraction(&self) -> f64 {
        self.band_summary.mean
    }
}

/// Mean bodyguard-VIP distance at every step of `trace`.
pub fn mean_escort_distances(trace: &EpisodeTrace) -> Vec<f64> {
    let roles = &trace.roles;
    trace
        .records
        .iter()
        .map(|r| {
            let vip = r.state.agents[roles.vip_index].position;
            roles
                .bodyguard_indices
                .iter()
                .map(|&g| r.state.agents[g].position.distance(vip))
                .sum::<f64>()
                / roles.bodyguard_indices.len() as f64
        })
        .collect()
}

/// Runs `episodes` episodes with derived seeds, building a fresh controller
/// for each from `make(controller_seed)`.
pub fn evaluate<'c, F>(scenario: &ScenarioConfig, label: &str, mut make: F, episodes: usize, seed: u64) -> Result<EvalReport>
where
    F: FnMut(u64) -> Box<dyn BodyguardController + 'c>,
{
    if episodes == 0 {
        return Err(Error::contract("evaluation needs at least one episode"));
    }
    let band = scenario.threat.min_distance..=scenario.threat.safe_distance;
    let mut report = EvalReport {
        controller: label.to_string(),
        seed,
        episode_seeds: Vec::with_capacity(episodes),
        cumulative_threat: Vec::with_capacity(episodes),
        mean_reward: Vec::with_capacity(episodes),
        band_fraction: Vec::with_capacity(episodes),
        threat_summary: Summary::of(&[]),
        reward_summary: Summary::of(&[]),
        band_summary: Summary::of(&[]),
    };
    for k in 0..episodes {
        let trace = evaluation_episode(scenario, &mut make, seed, k)?;
        let ep_seed = trace.seed;
        let n_guards = trace.roles.bodyguard_indices.len() as f64;
        let reward = trace
            .records
            .iter()
            .map(|r| r.rewards.iter().sum::<f64>() / n_guards)
            .sum();
        let distances = mean_escort_distances(&trace);
        let inside = distances.iter().filter(|d| band.contains(d)).count();
        report.episode_seeds.push(ep_seed);
        report.cumulative_threat.push(crate::threat::cumulative_threat(&trace)?);
        report.mean_reward.push(reward);
        report.band_fraction.push(inside as f64 / distances.len() as f64);
    }
    report.threat_summary = Summary::of(&report.cumulative_threat);
    report.reward_summary = Summary::of(&report.mean_reward);
    report.band_summary = Summary::of(&report.band_fraction);
    Ok(report)
}

/// Replays episode `k` of `evaluate(scenario, _, make, _, seed)` exactly.
pub fn evaluation_episode<'c, F>(scenario: &ScenarioConfig, make: &mut F, seed: u64, k: usize) -> Result<EpisodeTrace>
where
    F: FnMut(u64) -> Box<dyn BodyguardController + 'c>,
{
    let ep_seed = derive_seed(seed, stream::EVAL_EPISODE, k as u64);
    let mut controller = make(derive_seed(seed, stream::EVAL_CONTROLLER, k as u64));
    run_episode(scenario, controller.as_mut(), ep_seed)
}

/// Noise-free actions from a trained bundle.
pub struct PolicyController<'a> {
    bundle: &'a LearnerBundle,
    rng: SimRng,
}

impl<'a> PolicyController<'a> {
    pub fn new(bundle: &'a LearnerBundle) -> Self {
        PolicyController {
            bundle,
            rng: rng_from_seed(0),
        }
    }
}

impl BodyguardController for PolicyController<'_> {
    fn act(&mut self, episode: &Episode<'_>) -> Result<Vec<AgentAction>> {
        episode
            .bodyguard_observations()
            .iter()
            .enumerate()
            .map(|(g, obs)| select_action(&self.bundle.nets(g).actor, obs, 0.0, &mut self.rng))
            .collect()
    }
}

/// Non-learning reference controllers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    /// Force uniform in `[-1, 1]^2` every step.
    Random,
    /// Zero force.
    Stationary,
    /// Holds evenly spaced offsets on a circle of radius
    /// `(min_distance + safe_distance) / 2` around the VIP.
    ScriptedRing,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::Random, Baseline::Stationary, Baseline::ScriptedRing];

    pub fn label(self) -> &'static str {
        match self {
            Baseline::Random => "random",
            Baseline::Stationary => "stationary",
            Baseline::ScriptedRing => "scripted-ring",
        }
    }

    pub fn controller(self, seed: u64) -> Box<dyn BodyguardController> {
        match self {
            Baseline::Random => Box::new(RandomController {
                rng: rng_from_seed(seed),
            }),
            Baseline::Stationary => Box::new(|ep: &Episode<'_>| -> Result<Vec<AgentAction>> {
                Ok(vec![AgentAction::zero(ep.config().c_dim); ep.config().n_bodyguards])
            }),
            Baseline::ScriptedRing => Box::new(ring_actions),
        }
    }
}

impl FromStr for Baseline {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Baseline::ALL
            .into_iter()
            .find(|b| b.label() == s)
            .ok_or_else(|| Error::contract(format!("unknown baseline `{s}`")))
    }
}

struct RandomController {
    rng: SimRng,
}

impl BodyguardController for RandomController {
    fn act(&mut self, ep: &Episode<'_>) -> Result<Vec<AgentAction>> {
        let c_dim = ep.config().c_dim;
        Ok((0..ep.config().n_bodyguards)
            .map(|_| {
                let f = Vec2::new(self.rng.random_range(-1.0..=1.0), self.rng.random_range(-1.0..=1.0));
                AgentAction::new(f, vec![0.0; c_dim])
            })
            .collect())
    }
}

const RING_POSITION_GAIN: f64 = 4.0;
const RING_VELOCITY_GAIN: f64 = 0.8;

/// PD tracking of ring slots that move with the VIP.
fn ring_actions(ep: &Episode<'_>) -> Result<Vec<AgentAction>> {
    let cfg = ep.config();
    let state = ep.state();
    let roles = ep.roles();
    let vip = &state.agents[roles.vip_index];
    let radius = 0.5 * (cfg.threat.min_distance + cfg.threat.safe_distance);
    let n = roles.bodyguard_indices.len() as f64;
    Ok(roles
        .bodyguard_indices
        .iter()
        .enumerate()
        .map(|(k, &g)| {
            let angle = std::f64::consts::TAU * k as f64 / n;
            let slot = vip.position + Vec2::new(angle.cos(), angle.sin()) * radius;
            let me = &state.agents[g];
            let f = (slot - me.position) * RING_POSITION_GAIN + (vip.velocity - me.velocity) * RING_VELOCITY_GAIN;
            AgentAction::new(f, vec![0.0; cfg.c_dim])
        })
        .collect())
}
