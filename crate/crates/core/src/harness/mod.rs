//! Run plumbing: configuration files, checkpoints, trajectories, evaluation
//! and SVG frames.

pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod render;
pub mod trajectory;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{RenderOptions, RunConfig, RunSection};
pub use eval::{evaluate, evaluation_episode, mean_escort_distances, Baseline, EvalReport, PolicyController, Summary};
pub use render::{render_frame, render_trajectory, Palette, RenderStyle};
pub use trajectory::{read_trajectory, write_trajectory};
