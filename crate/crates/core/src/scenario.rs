//! The mall escort scenario: role layout, scripted VIP and bystanders, and
//! the episode driver that asks a controller for the bodyguards' actions.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::rng::{rng_from_seed, SimRng};
use crate::threat::{bodyguard_rewards, instantaneous_threat, ThreatParams};
use crate::world::{self, observe_into, place_entities, AgentAction, PhysicsConfig, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BodyConfig {
    pub vip_radius: f64,
    pub bodyguard_radius: f64,
    pub bystander_radius: f64,
    pub landmark_radius: f64,
    pub agent_mass: f64,
}

impl Default for BodyConfig {
    fn default() -> Self {
        BodyConfig {
            vip_radius: 0.05,
            bodyguard_radius: 0.05,
            bystander_radius: 0.05,
            landmark_radius: 0.08,
            agent_mass: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub n_bodyguards: usize,
    pub n_bystanders: usize,
    pub n_landmarks: usize,
    /// Episode length in steps.
    pub horizon: usize,
    /// Utterance dimension; 0 disables the channel.
    pub c_dim: usize,
    pub seed: u64,
    pub arrival_radius: f64,
    pub vip_speed_factor: f64,
    pub bystander_speed_factor: f64,
    pub bodies: BodyConfig,
    pub threat: ThreatParams,
    pub physics: PhysicsConfig,
}

impl Default for ScenarioConfig {
    /// The mall: 3 bodyguards, 10 bystanders, 12 landmarks, 25 steps.
    fn default() -> Self {
        ScenarioConfig {
            n_bodyguards: 3,
            n_bystanders: 10,
            n_landmarks: 12,
            horizon: 25,
            c_dim: 0,
            seed: 0,
            arrival_radius: 0.1,
            vip_speed_factor: 0.6,
            bystander_speed_factor: 1.0,
            bodies: BodyConfig::default(),
            threat: ThreatParams::default(),
            physics: PhysicsConfig::default(),
        }
    }
}

/// SHA-256 of a scenario's canonical JSON form with the seed zeroed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScenarioDigest(pub [u8; 32]);

impl fmt::Display for ScenarioDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl std::str::FromStr for ScenarioDigest {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bytes = hex::decode(s).map_err(|e| Error::Corrupt {
            what: "digest",
            message: e.to_string(),
        })?;
        let arr: [u8; 32] = bytes.try_into().map_err(|_| Error::Corrupt {
            what: "digest",
            message: "expected 32 bytes".into(),
        })?;
        Ok(ScenarioDigest(arr))
    }
}

impl ScenarioConfig {
    pub fn n_agents(&self) -> usize {
        1 + self.n_bodyguards + self.n_bystanders
    }

    pub fn observation_len(&self) -> usize {
        world::observation_len(self.n_agents(), self.n_landmarks, self.c_dim)
    }

    /// Width of a bodyguard action vector: force plus utterance.
    pub fn action_len(&self) -> usize {
        2 + self.c_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bodyguards == 0 {
            return Err(Error::config("scenario.n_bodyguards", "must be >= 1"));
        }
        if self.n_landmarks == 0 {
            return Err(Error::config("scenario.n_landmarks", "must be >= 1"));
        }
        if self.horizon == 0 {
            return Err(Error::config("scenario.horizon", "must be >= 1"));
        }
        if self.c_dim > world::MAX_UTTERANCE_DIM {
            return Err(Error::config(
                "scenario.c_dim",
                format!("must be <= {}", world::MAX_UTTERANCE_DIM),
            ));
        }
        world::positive(self.arrival_radius, "scenario.arrival_radius")?;
        world::positive(self.vip_speed_factor, "scenario.vip_speed_factor")?;
        world::positive(self.bystander_speed_factor, "scenario.bystander_speed_factor")?;
        let b = &self.bodies;
        for (name, r) in [
            ("vip_radius", b.vip_radius),
            ("bodyguard_radius", b.bodyguard_radius),
            ("bystander_radius", b.bystander_radius),
            ("landmark_radius", b.landmark_radius),
        ] {
            if !(r.is_finite() && r >= 0.0) {
                return Err(Error::config(format!("scenario.bodies.{name}"), "must be >= 0"));
            }
        }
        world::positive(b.agent_mass, "scenario.bodies.agent_mass")?;
        self.threat.validate("scenario.threat")?;
        self.physics.validate("scenario.physics")?;
        Ok(())
    }

    pub fn digest(&self) -> ScenarioDigest {
        let canonical = ScenarioConfig {
            seed: 0,
            ..self.clone()
        };
        let json = serde_json::to_vec(&canonical).expect("scenario config serializes");
        ScenarioDigest(Sha256::digest(&json).into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleAssignment {
    pub vip_index: usize,
    pub bodyguard_indices: Vec<usize>,
    pub bystander_indices: Vec<usize>,
    pub vip_goal_landmark: usize,
    /// Current target landmark of each bystander, aligned with `bystander_indices`.
    pub bystander_waypoints: Vec<usize>,
}

impl RoleAssignment {
    pub fn n_agents(&self) -> usize {
        1 + self.bodyguard_indices.len() + self.bystander_indices.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// World after the step.
    pub state: WorldState,
    /// Actions of every agent, indexed by agent.
    pub actions: Vec<AgentAction>,
    /// Reward of each bodyguard, in `bodyguard_indices` order.
    pub rewards: Vec<f64>,
    pub threat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub seed: u64,
    pub config_digest: ScenarioDigest,
    pub world_half_extent: f64,
    /// Roles at the start of the episode.
    pub roles: RoleAssignment,
    pub records: Vec<StepRecord>,
}

/// Resets the world from `cfg.seed` and assigns roles: VIP is agent 0,
/// bodyguards follow, bystanders last.
pub fn build_scenario(cfg: &ScenarioConfig) -> Result<(WorldState, RoleAssignment)> {
    let (state, roles, _) = build_scenario_seeded(cfg, cfg.seed)?;
    Ok((state, roles))
}

/// As [`build_scenario`] but with an explicit seed; also returns the episode
/// generator positioned after the setup draws.
pub fn build_scenario_seeded(
    cfg: &ScenarioConfig,
    seed: u64,
) -> Result<(WorldState, RoleAssignment, SimRng)> {
    let mut rng = rng_from_seed(seed);
    let state = place_entities(cfg, &mut rng)?;
    let m = cfg.n_landmarks;
    let vip_goal_landmark = rng.random_range(0..m);
    let bystander_waypoints = (0..cfg.n_bystanders)
        .map(|_| rng.random_range(0..m))
        .collect();
    let roles = RoleAssignment {
        vip_index: 0,
        bodyguard_indices: (1..=cfg.n_bodyguards).collect(),
        bystander_indices: (cfg.n_bodyguards + 1..cfg.n_agents()).collect(),
        vip_goal_landmark,
        bystander_waypoints,
    };
    Ok((state, roles, rng))
}

fn seek(from: Vec2, to: Vec2, speed_factor: f64, arrival_radius: f64) -> Vec2 {
    let delta = to - from;
    let dist = delta.norm();
    if dist <= arrival_radius {
        Vec2::ZERO
    } else {
        delta * (speed_factor / dist)
    }
}

/// Heads straight for the goal landmark at `vip_speed_factor`; stops once
/// within `arrival_radius`.
pub fn vip_policy(state: &WorldState, roles: &RoleAssignment, cfg: &ScenarioConfig) -> AgentAction {
    let pos = state.agents[roles.vip_index].position;
    let goal = state.landmarks[roles.vip_goal_landmark].position;
    AgentAction::new(
        seek(pos, goal, cfg.vip_speed_factor, cfg.arrival_radius),
        vec![0.0; cfg.c_dim],
    )
}

/// Moves bystander `bystander_id` toward its waypoint. On arrival a new
/// waypoint is drawn uniformly from the other landmarks and the bystander
/// heads there instead. Returns the action and the (possibly new) waypoint.
pub fn bystander_policy(
    state: &WorldState,
    bystander_id: usize,
    roles: &RoleAssignment,
    cfg: &ScenarioConfig,
    rng: &mut SimRng,
) -> Result<(AgentAction, usize)> {
    let slot = roles
        .bystander_indices
        .iter()
        .position(|&b| b == bystander_id)
        .ok_or_else(|| Error::contract(format!("agent {bystander_id} is not a bystander")))?;
    let pos = state.agents[bystander_id].position;
    let m = state.n_landmarks();
    let mut waypoint = roles.bystander_waypoints[slot];
    let arrived = pos.distance(state.landmarks[waypoint].position) <= cfg.arrival_radius;
    if arrived && m > 1 {
        let draw = rng.random_range(0..m - 1);
        waypoint = if draw >= waypoint { draw + 1 } else { draw };
    }
    let force = seek(
        pos,
        state.landmarks[waypoint].position,
        cfg.bystander_speed_factor,
        cfg.arrival_radius,
    );
    Ok((AgentAction::new(force, vec![0.0; cfg.c_dim]), waypoint))
}

/// Supplies the bodyguards' actions, one per bodyguard in index order.
pub trait BodyguardController {
    fn act(&mut self, episode: &Episode<'_>) -> Result<Vec<AgentAction>>;
}

impl<F> BodyguardController for F
where
    F: FnMut(&Episode<'_>) -> Result<Vec<AgentAction>>,
{
    fn act(&mut self, episode: &Episode<'_>) -> Result<Vec<AgentAction>> {
        self(episode)
    }
}

/// A running episode. Owns the world, the roles and the episode generator.
pub struct Episode<'a> {
    cfg: &'a ScenarioConfig,
    state: WorldState,
    roles: RoleAssignment,
    rng: SimRng,
    trace: EpisodeTrace,
}

impl<'a> Episode<'a> {
    pub fn new(cfg: &'a ScenarioConfig, seed: u64) -> Result<Self> {
        let (state, roles, rng) = build_scenario_seeded(cfg, seed)?;
        let trace = EpisodeTrace {
            seed,
            config_digest: cfg.digest(),
            world_half_extent: cfg.physics.world_half_extent,
            roles: roles.clone(),
            records: Vec::with_capacity(cfg.horizon),
        };
        Ok(Episode {
            cfg,
            state,
            roles,
            rng,
            trace,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        self.cfg
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn roles(&self) -> &RoleAssignment {
        &self.roles
    }

    pub fn steps_taken(&self) -> usize {
        self.trace.records.len()
    }

    pub fn is_done(&self) -> bool {
        self.steps_taken() >= self.cfg.horizon
    }

    /// Observation of each bodyguard, in `bodyguard_indices` order.
    pub fn bodyguard_observations(&self) -> Vec<Vec<f64>> {
        self.roles
            .bodyguard_indices
            .iter()
            .map(|&g| {
                let mut v = Vec::with_capacity(self.cfg.observation_len());
                observe_into(&self.state, g, &mut v).expect("bodyguard index is valid");
                v
            })
            .collect()
    }

    /// Advances one step with the given bodyguard actions; scripted agents
    /// act on the pre-step world, rewards and threat are read off the
    /// post-step world.
    pub fn step(&mut self, bodyguard_actions: Vec<AgentAction>) -> Result<&StepRecord> {
        if self.is_done() {
            return Err(Error::contract("episode already reached its horizon"));
        }
        if bodyguard_actions.len() != self.cfg.n_bodyguards {
            return Err(Error::contract(format!(
                "expected {} bodyguard actions, got {}",
                self.cfg.n_bodyguards,
                bodyguard_actions.len()
            )));
        }
        let n = self.state.n_agents();
        let mut actions = vec![AgentAction::zero(self.cfg.c_dim); n];
        actions[self.roles.vip_index] = vip_policy(&self.state, &self.roles, self.cfg);
        for slot in 0..self.roles.bystander_indices.len() {
            let b = self.roles.bystander_indices[slot];
            let (action, waypoint) =
                bystander_policy(&self.state, b, &self.roles, self.cfg, &mut self.rng)?;
            actions[b] = action;
            self.roles.bystander_waypoints[slot] = waypoint;
        }
        for (&g, a) in self.roles.bodyguard_indices.iter().zip(bodyguard_actions) {
            actions[g] = a;
        }

        let next = world::step_world(&self.state, &actions, &self.cfg.physics)?;
        let rewards = bodyguard_rewards(&next, &actions, &self.roles, &self.cfg.threat)
            .into_iter()
            .map(|b| b.total)
            .collect();
        let threat = instantaneous_threat(&next, &self.roles, &self.cfg.threat);
        self.state = next.clone();
        self.trace.records.push(StepRecord {
            state: next,
            actions,
            rewards,
            threat,
        });
        Ok(self.trace.records.last().expect("just pushed"))
    }

    pub fn into_trace(self) -> EpisodeTrace {
        self.trace
    }
}

/// Runs one full episode of `cfg.horizon` steps.
pub fn run_episode(
    cfg: &ScenarioConfig,
    controller: &mut dyn BodyguardController,
    seed: u64,
) -> Result<EpisodeTrace> {
    let mut episode = Episode::new(cfg, seed)?;
    while !episode.is_done() {
        let step = episode.steps_taken();
        let actions = controller.act(&episode).map_err(|e| Error::Controller {
            step,
            message: e.to_string(),
        })?;
        episode.step(actions).map_err(|e| match e {
            Error::Contract(message) => Error::Controller { step, message },
            other => other,
        })?;
    }
    Ok(episode.into_trace())
}
