//! DDPG and MADDPG for the bodyguards.
//!
//! Every bodyguard has its own deterministic actor `pi_i(s_i)` and critic
//! `Q_i`. Under MADDPG the critic sees every bodyguard's action (and, by
//! default, every bodyguard's observation); under DDPG it sees only agent
//! `i`'s own observation and action. The VIP and bystanders are scripted and
//! belong to the environment.

mod learner;
mod replay;
mod train;

pub use learner::{
    actor_objective_grad, actor_step, actor_update, critic_input, critic_update, select_action,
    ActionValue, AgentNets, Algorithm, CriticLayout, CriticObs, LearnerBundle,
};
pub use replay::{Batch, ReplayBuffer, Transition};
pub use train::{noise_scale_at, train, train_with, EpisodeLog, TrainConfig};
