//! Inverted dropout: survivors are scaled by `1 / (1 - rate)` at train time,
//! so eval mode is the identity.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Element, Mode, Tensor};

#[derive(Debug, Clone)]
pub struct DropoutContext<T = f32> {
    /// Per-element multiplier (0 or the survivor scale); `None` means identity.
    mask: Option<Vec<T>>,
    shape: Vec<usize>,
}

pub fn dropout_forward<T: Element>(
    x: &Tensor<T>,
    rate: f64,
    mode: Mode,
    rng: &mut Rng,
) -> Result<(Tensor<T>, DropoutContext<T>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    let shape = x.shape().to_vec();
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((x.clone(), DropoutContext { mask: None, shape }));
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..x.len())
        .map(|_| {
            if rng.uniform() < rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect();
    let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Ok((
        Tensor::new(shape.clone(), data)?,
        DropoutContext {
            mask: Some(mask),
            shape,
        },
    ))
}

pub fn dropout_backward<T: Element>(
    grad_out: &Tensor<T>,
    ctx: &DropoutContext<T>,
) -> Result<Tensor<T>> {
    if grad_out.shape() != ctx.shape.as_slice() {
        return Err(Error::ShapeMismatch {
            op: "dropout backward",
            left: grad_out.shape().to_vec(),
            right: ctx.shape.clone(),
        });
    }
    match &ctx.mask {
        None => Ok(grad_out.clone()),
        Some(mask) => Tensor::new(
            ctx.shape.clone(),
            grad_out
                .data()
                .iter()
                .zip(mask)
                .map(|(&g, &m)| g * m)
                .collect(),
        ),
    }
}
