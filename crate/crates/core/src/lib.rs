//! A from-scratch toolkit for a compact two-block convolutional classifier:
//! tensors, layers with verified gradients, training, evaluation metrics,
//! data preparation and gradient saliency.

pub mod data;
pub mod error;
pub mod layers;
pub mod metrics;
pub mod network;
pub mod rng;
pub mod saliency;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{Mode, Tensor};
