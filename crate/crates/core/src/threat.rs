//! Proximity threat to the VIP and the per-bodyguard reward built on it.
//!
//! Each bystander `b` at distance `r` from the VIP poses threat
//! `TL = exp(-gain * r / scale)`. The probability-like quantity
//! `prod_b (1 - TL_b)` is how "safe" the VIP is this step; the bodyguard
//! reward is `-1 + prod + band + utterance`, where `band` is `-1` whenever
//! the bodyguard leaves the `[min_distance, safe_distance]` annulus.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::scenario::{EpisodeTrace, RoleAssignment};
use crate::world::{AgentAction, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThreatParams {
    /// Multiplies the VIP-bystander distance in the exponent.
    pub threat_gain: f64,
    /// Length scale dividing the exponent.
    pub threat_scale: f64,
    /// Inner radius of the no-penalty band around the VIP.
    pub min_distance: f64,
    /// Outer radius of the band.
    pub safe_distance: f64,
    /// Added to the reward whenever the bodyguard speaks. Non-positive.
    pub utterance_penalty: f64,
    /// An utterance counts as spoken when any component exceeds this in magnitude.
    pub utterance_threshold: f64,
}

impl Default for ThreatParams {
    fn default() -> Self {
        ThreatParams {
            threat_gain: 1.0,
            threat_scale: 0.35,
            min_distance: 0.15,
            safe_distance: 0.6,
            utterance_penalty: -0.05,
            utterance_threshold: 1e-6,
        }
    }
}

impl ThreatParams {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let field = |name: &str| format!("{prefix}.{name}");
        crate::world::positive(self.threat_gain, &field("threat_gain"))?;
        crate::world::positive(self.threat_scale, &field("threat_scale"))?;
        if !(self.min_distance.is_finite() && self.min_distance >= 0.0) {
            return Err(Error::config(field("min_distance"), "must be >= 0"));
        }
        if !(self.safe_distance.is_finite() && self.safe_distance > self.min_distance) {
            return Err(Error::config(
                field("safe_distance"),
                "must be greater than min_distance",
            ));
        }
        if !(self.utterance_penalty.is_finite() && self.utterance_penalty <= 0.0) {
            return Err(Error::config(field("utterance_penalty"), "must be <= 0"));
        }
        crate::world::positive(self.utterance_threshold, &field("utterance_threshold"))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    /// `-1 + prod(1 - TL)`, in `[-1, 0]`.
    pub residual_threat_term: f64,
    /// `0` inside the band, `-1` outside.
    pub band_penalty: f64,
    pub utterance_penalty: f64,
    pub total: f64,
}

pub fn threat_level(dist: f64, params: &ThreatParams) -> Result<f64> {
    if dist.is_nan() || dist < 0.0 {
        return Err(Error::contract(format!("distance must be >= 0, got {dist}")));
    }
    Ok((-params.threat_gain * dist / params.threat_scale).exp())
}

fn threat_level_unchecked(dist: f64, params: &ThreatParams) -> f64 {
    (-params.threat_gain * dist / params.threat_scale).exp()
}

pub fn distance_band_penalty(bodyguard_pos: Vec2, vip_pos: Vec2, params: &ThreatParams) -> f64 {
    let dist = bodyguard_pos.distance(vip_pos);
    if (params.min_distance..=params.safe_distance).contains(&dist) {
        0.0
    } else {
        -1.0
    }
}

/// `prod_b (1 - TL(VIP, b))` over the bystanders in index order. 1 with none.
pub fn safety_product(state: &WorldState, roles: &RoleAssignment, params: &ThreatParams) -> f64 {
    let vip = state.agents[roles.vip_index].position;
    roles
        .bystander_indices
        .iter()
        .map(|&b| 1.0 - threat_level_unchecked(vip.distance(state.agents[b].position), params))
        .product()
}

pub fn bodyguard_reward(
    state: &WorldState,
    bodyguard_id: usize,
    action: &AgentAction,
    roles: &RoleAssignment,
    params: &ThreatParams,
) -> Result<RewardBreakdown> {
    if !roles.bodyguard_indices.contains(&bodyguard_id) {
        return Err(Error::contract(format!(
            "agent {bodyguard_id} is not a bodyguard"
        )));
    }
    let residual_threat_term = -1.0 + safety_product(state, roles, params);
    Ok(breakdown(
        residual_threat_term,
        state.agents[bodyguard_id].position,
        state.agents[roles.vip_index].position,
        action,
        params,
    ))
}

/// Rewards for every bodyguard in `roles.bodyguard_indices` order, sharing
/// one evaluation of the residual term. `actions` is indexed by agent.
pub fn bodyguard_rewards(
    state: &WorldState,
    actions: &[AgentAction],
    roles: &RoleAssignment,
    params: &ThreatParams,
) -> Vec<RewardBreakdown> {
    let residual = -1.0 + safety_product(state, roles, params);
    let vip = state.agents[roles.vip_index].position;
    roles
        .bodyguard_indices
        .iter()
        .map(|&g| breakdown(residual, state.agents[g].position, vip, &actions[g], params))
        .collect()
}

fn breakdown(
    residual_threat_term: f64,
    bodyguard: Vec2,
    vip: Vec2,
    action: &AgentAction,
    params: &ThreatParams,
) -> RewardBreakdown {
    let band_penalty = distance_band_penalty(bodyguard, vip, params);
    let spoke = action
        .utterance
        .iter()
        .any(|u| u.abs() > params.utterance_threshold);
    let utterance_penalty = if spoke { params.utterance_penalty } else { 0.0 };
    RewardBreakdown {
        residual_threat_term,
        band_penalty,
        utterance_penalty,
        total: residual_threat_term + band_penalty + utterance_penalty,
    }
}

/// `1 - prod_b (1 - TL(VIP, b))`; 0 with no bystanders.
pub fn instantaneous_threat(state: &WorldState, roles: &RoleAssignment, params: &ThreatParams) -> f64 {
    1.0 - safety_product(state, roles, params)
}

/// Sum of the per-step threat over an episode. Lower is better.
pub fn cumulative_threat(trace: &EpisodeTrace) -> Result<f64> {
    if trace.records.is_empty() {
        return Err(Error::contract("cumulative threat of an empty trace"));
    }
    Ok(trace.records.iter().map(|r| r.threat).sum())
}
