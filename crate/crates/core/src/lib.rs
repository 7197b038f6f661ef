//! VIP escort in a 2D particle world.
//!
//! A scripted VIP walks to a goal landmark through a crowd of scripted
//! bystanders while learning bodyguards try to keep the VIP's proximity
//! threat low. The crate contains the simulation ([`world`], [`scenario`]),
//! the reward ([`threat`]), a small neural-network substrate ([`nn`]), the
//! DDPG/MADDPG learners ([`marl`]) and the run harness ([`harness`]).

pub mod error;
pub mod geom;
pub mod harness;
pub mod marl;
pub mod nn;
pub mod rng;
pub mod scenario;
pub mod threat;
pub mod world;

pub use error::{Error, Result};
pub use geom::Vec2;
pub use scenario::{
    build_scenario, run_episode, BodyguardController, Episode, EpisodeTrace, RoleAssignment,
    ScenarioConfig, ScenarioDigest, StepRecord,
};
pub use threat::{RewardBreakdown, ThreatParams};
pub use world::{AgentAction, EntityState, Observation, PhysicsConfig, WorldState};
