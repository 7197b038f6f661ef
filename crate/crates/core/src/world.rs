//! Discrete-time 2D particle world.
//!
//! Agents and landmarks are discs. Agents are pushed by their own force
//! command, by soft pairwise contact with other agents, and by a restoring
//! spring once they leave the world square. Landmarks never move and do not
//! take part in contacts (agents walk onto them to "arrive").

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::rng::{rng_from_seed, SimRng};
use crate::scenario::ScenarioConfig;

/// Contact forces are exactly zero once the gap, measured in units of
/// `contact_margin`, exceeds this value. The softplus tail there is ~1e-13.
pub const CONTACT_CUTOFF: f64 = 30.0;

/// Maximum utterance dimension the channel supports.
pub const MAX_UTTERANCE_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct EntityState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
    pub mass: f64,
    pub movable: bool,
}

impl EntityState {
    pub fn at(position: Vec2, radius: f64, mass: f64, movable: bool) -> Self {
        EntityState {
            position,
            velocity: Vec2::ZERO,
            radius,
            mass,
            movable,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub agents: Vec<EntityState>,
    pub landmarks: Vec<EntityState>,
    /// One vector of length `c_dim` per agent.
    pub utterances: Vec<Vec<f64>>,
    pub step_index: usize,
}

impl WorldState {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn n_landmarks(&self) -> usize {
        self.landmarks.len()
    }

    pub fn c_dim(&self) -> usize {
        self.utterances.first().map_or(0, Vec::len)
    }

    /// Length of every agent's observation vector in this world.
    pub fn observation_len(&self) -> usize {
        observation_len(self.n_agents(), self.n_landmarks(), self.c_dim())
    }
}

pub fn observation_len(n_agents: usize, n_landmarks: usize, c_dim: usize) -> usize {
    (n_agents + n_landmarks) * 4 + n_agents * c_dim
}

/// A force command in `[-1, 1]^2` plus an utterance vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentAction {
    force: Vec2,
    pub utterance: Vec<f64>,
}

impl AgentAction {
    /// Builds an action, clamping each force component to `[-1, 1]`.
    /// NaN components become 0.
    pub fn new(force: Vec2, utterance: Vec<f64>) -> Self {
        AgentAction {
            force: Vec2::new(clamp_unit(force.x), clamp_unit(force.y)),
            utterance,
        }
    }

    pub fn zero(c_dim: usize) -> Self {
        AgentAction {
            force: Vec2::ZERO,
            utterance: vec![0.0; c_dim],
        }
    }

    /// Splits a flat `[fx, fy, u_0, .., u_{c-1}]` vector into an action.
    pub fn from_flat(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::contract(format!(
                "action vector needs at least 2 components, got {}",
                values.len()
            )));
        }
        Ok(AgentAction::new(
            Vec2::new(values[0], values[1]),
            values[2..].to_vec(),
        ))
    }

    pub fn force(&self) -> Vec2 {
        self.force
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 + self.utterance.len());
        v.push(self.force.x);
        v.push(self.force.y);
        v.extend_from_slice(&self.utterance);
        v
    }
}

fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(-1.0, 1.0)
    }
}

/// Flat per-agent view of the world.
///
/// Layout, for an observer `i`: for every entity `j` (agents first, then
/// landmarks) the block `[x_j - x_i, y_j - y_i, vx_j, vy_j]`, followed by
/// the utterance vector of every agent in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub values: Vec<f64>,
}

impl Observation {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Relative position block of entity `j` (agents first, then landmarks).
    pub fn relative_position(&self, entity: usize) -> Vec2 {
        Vec2::new(self.values[entity * 4], self.values[entity * 4 + 1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsConfig {
    pub dt: f64,
    pub damping: f64,
    pub force_gain: f64,
    /// `None` means unlimited; written as `"unlimited"` in config files.
    #[serde(with = "speed_limit")]
    pub max_speed: Option<f64>,
    pub contact_margin: f64,
    pub contact_force: f64,
    pub world_half_extent: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        PhysicsConfig {
            dt: 0.1,
            damping: 0.25,
            force_gain: 5.0,
            max_speed: Some(1.3),
            contact_margin: 0.01,
            contact_force: 100.0,
            world_half_extent: 1.5,
        }
    }
}

impl PhysicsConfig {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let field = |name: &str| format!("{prefix}.{name}");
        positive(self.dt, &field("dt"))?;
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::config(field("damping"), "must lie in [0, 1)"));
        }
        positive(self.force_gain, &field("force_gain"))?;
        if let Some(s) = self.max_speed {
            positive(s, &field("max_speed"))?;
        }
        positive(self.contact_margin, &field("contact_margin"))?;
        positive(self.contact_force, &field("contact_force"))?;
        positive(self.world_half_extent, &field("world_half_extent"))?;
        Ok(())
    }
}

mod speed_limit {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    const UNLIMITED: &str = "unlimited";

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Value(f64),
        Word(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => Repr::Value(*x),
            None => Repr::Word(UNLIMITED.to_string()),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Value(x) => Ok(Some(x)),
            Repr::Word(w) if w == UNLIMITED => Ok(None),
            Repr::Word(w) => Err(serde::de::Error::custom(format!(
                "expected a number or \"{UNLIMITED}\", got \"{w}\""
            ))),
        }
    }
}

pub(crate) fn positive(v: f64, field: &str) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be positive and finite, got {v}")))
    }
}

/// Places every entity uniformly in the world square, agents first (VIP,
/// bodyguards, bystanders) then landmarks, drawing `x` then `y` for each.
pub fn reset_world(config: &ScenarioConfig, seed: u64) -> Result<WorldState> {
    let mut rng = rng_from_seed(seed);
    place_entities(config, &mut rng)
}

pub(crate) fn place_entities(config: &ScenarioConfig, rng: &mut SimRng) -> Result<WorldState> {
    config.validate()?;
    let h = config.physics.world_half_extent;
    let bodies = &config.bodies;
    let draw = |rng: &mut SimRng| Vec2::new(rng.random_range(-h..h), rng.random_range(-h..h));

    let mut agents = Vec::with_capacity(config.n_agents());
    agents.push(EntityState::at(draw(rng), bodies.vip_radius, bodies.agent_mass, true));
    for _ in 0..config.n_bodyguards {
        agents.push(EntityState::at(draw(rng), bodies.bodyguard_radius, bodies.agent_mass, true));
    }
    for _ in 0..config.n_bystanders {
        agents.push(EntityState::at(draw(rng), bodies.bystander_radius, bodies.agent_mass, true));
    }
    let landmarks = (0..config.n_landmarks)
        .map(|_| EntityState::at(draw(rng), bodies.landmark_radius, 1.0, false))
        .collect();

    Ok(WorldState {
        utterances: vec![vec![0.0; config.c_dim]; agents.len()],
        agents,
        landmarks,
        step_index: 0,
    })
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Soft repulsion acting on `a` due to `b`.
///
/// With gap `g = |x_a - x_b| - (r_a + r_b)` and margin `k`, the magnitude is
/// `contact_force * k * softplus(-g / k)`, directed from `b` to `a`. It is
/// exactly zero once `g / k >= CONTACT_CUTOFF`. Coincident centres push `a`
/// along +x with the full penetration magnitude.
pub fn pairwise_contact_force(a: &EntityState, b: &EntityState, cfg: &PhysicsConfig) -> Vec2 {
    let delta = a.position - b.position;
    let dist = delta.norm();
    let min_dist = a.radius + b.radius;
    let k = cfg.contact_margin;
    let gap = (dist - min_dist) / k;
    if gap >= CONTACT_CUTOFF {
        return Vec2::ZERO;
    }
    let magnitude = cfg.contact_force * k * softplus(-gap);
    let direction = if dist > 0.0 {
        delta * (1.0 / dist)
    } else {
        Vec2::UNIT_X
    };
    direction * magnitude
}

/// Linear spring pulling an entity back once it leaves the world square.
/// Zero everywhere inside it.
fn boundary_force(position: Vec2, cfg: &PhysicsConfig) -> Vec2 {
    let h = cfg.world_half_extent;
    let axis = |v: f64| {
        if v > h {
            -cfg.contact_force * (v - h)
        } else if v < -h {
            cfg.contact_force * (-h - v)
        } else {
            0.0
        }
    };
    Vec2::new(axis(position.x), axis(position.y))
}

/// Advances the world by one step.
///
/// For every movable agent:
/// `v' = v (1 - damping) + (force_gain * f + contacts + boundary) / mass * dt`,
/// then `|v'|` is clamped to `max_speed` and `x' = x + v' dt`.
pub fn step_world(
    state: &WorldState,
    actions: &[AgentAction],
    cfg: &PhysicsConfig,
) -> Result<WorldState> {
    let n = state.n_agents();
    if actions.len() != n {
        return Err(Error::contract(format!(
            "expected {n} actions, got {}",
            actions.len()
        )));
    }
    let c_dim = state.c_dim();
    if let Some((i, a)) = actions
        .iter()
        .enumerate()
        .find(|(_, a)| a.utterance.len() != c_dim)
    {
        return Err(Error::contract(format!(
            "action {i} has utterance length {}, world uses {c_dim}",
            a.utterance.len()
        )));
    }

    let mut forces: Vec<Vec2> = actions
        .iter()
        .map(|a| a.force() * cfg.force_gain)
        .collect();
    for i in 0..n {
        for j in (i + 1)..n {
            let f = pairwise_contact_force(&state.agents[i], &state.agents[j], cfg);
            forces[i] += f;
            forces[j] -= f;
        }
    }

    let mut next = state.clone();
    for (entity, force) in next.agents.iter_mut().zip(forces) {
        if !entity.movable {
            continue;
        }
        let total = force + boundary_force(entity.position, cfg);
        let mut v = entity.velocity * (1.0 - cfg.damping) + total * (cfg.dt / entity.mass);
        if let Some(max) = cfg.max_speed {
            let speed = v.norm();
            if speed > max {
                v = v * (max / speed);
            }
        }
        entity.velocity = v;
        entity.position += v * cfg.dt;
    }
    for (slot, action) in next.utterances.iter_mut().zip(actions) {
        slot.clone_from(&action.utterance);
    }
    next.step_index += 1;
    Ok(next)
}

/// Builds agent `agent_index`'s observation. See [`Observation`] for the layout.
pub fn observe(state: &WorldState, agent_index: usize) -> Result<Observation> {
    let mut values = Vec::with_capacity(state.observation_len());
    observe_into(state, agent_index, &mut values)?;
    Ok(Observation { values })
}

/// Appends agent `agent_index`'s observation to `out`.
pub fn observe_into(state: &WorldState, agent_index: usize, out: &mut Vec<f64>) -> Result<()> {
    let me = state
        .agents
        .get(agent_index)
        .ok_or_else(|| {
            Error::contract(format!(
                "agent index {agent_index} out of range for {} agents",
                state.n_agents()
            ))
        })?
        .position;
    for e in state.agents.iter().chain(&state.landmarks) {
        let rel = e.position - me;
        out.extend_from_slice(&[rel.x, rel.y, e.velocity.x, e.velocity.y]);
    }
    for u in &state.utterances {
        out.extend_from_slice(u);
    }
    Ok(())
}
