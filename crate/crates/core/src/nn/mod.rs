//! Small dense networks with hand-written reverse-mode gradients.

mod adam;
mod mlp;

pub use adam::{Adam, AdamConfig};
pub use mlp::{soft_update, Activation, Dense, ForwardCache, GradBundle, Mlp};
