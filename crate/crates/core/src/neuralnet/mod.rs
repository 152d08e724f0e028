//! Dense-network substrate: forward and reverse passes, Adam, soft target
//! updates and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod mlp;

pub use adam::{AdamHyper, AdamState};
pub use mlp::{soft_update, Activation, Gradients, Layer, Mlp};
