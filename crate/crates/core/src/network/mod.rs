//! Network assembly, parameter accounting and checkpoints.

mod accounting;
pub mod checkpoint;
mod model;
mod spec;

pub use accounting::*;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMetadata};
pub use model::{ForwardTrace, Gradients, Network};
pub use spec::{NetworkSpec, ShapeChain};

use crate::error::Result;
use crate::rng::Rng;

pub fn build_network(spec: NetworkSpec, rng: &mut Rng) -> Result<Network> {
    Network::build(spec, rng)
}
