//! Forward and backward kernels for each layer type of the network.
//!
//! Kernels are generic over [`Element`](crate::tensor::Element) so that the
//! finite-difference checks in [`gradcheck`] can run them in `f64`.

mod batchnorm;
mod conv;
mod dense;
mod dropout;
pub mod gradcheck;
mod loss;
mod pool;
mod relu;

pub use batchnorm::*;
pub use conv::*;
pub use dense::*;
pub use dropout::*;
pub use loss::*;
pub use pool::*;
pub use relu::*;

use crate::error::{Error, Result};

pub(crate) fn dims4(name: &str, shape: &[usize]) -> Result<[usize; 4]> {
    shape
        .try_into()
        .map_err(|_| Error::layer(name, format!("expected a rank-4 tensor, got {shape:?}")))
}
