//! 2x2, stride-2 max pooling with floor semantics for odd sizes.

use crate::error::{Error, Result};
use crate::layers::dims4;
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone)]
pub struct PoolContext {
    input_shape: [usize; 4],
    /// Flat input index of the winning element for every output element.
    argmax: Vec<usize>,
}

pub fn maxpool2x2_forward<T: Element>(
    name: &str,
    x: &Tensor<T>,
) -> Result<(Tensor<T>, PoolContext)> {
    let shape @ [b, c, h, w] = dims4(name, x.shape())?;
    if h < 2 || w < 2 {
        return Err(Error::layer(
            name,
            format!("input {h}x{w} too small for 2x2 pooling"),
        ));
    }
    let (oh, ow) = (h / 2, w / 2);
    let xs = x.data();
    let mut out = Vec::with_capacity(b * c * oh * ow);
    let mut argmax = Vec::with_capacity(b * c * oh * ow);
    for plane in 0..b * c {
        let base = plane * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let top = base + 2 * i * w + 2 * j;
                let window = [top, top + 1, top + w, top + w + 1];
                // Strict comparison keeps the first maximum in row-major order.
                let mut best = window[0];
                for &idx in &window[1..] {
                    if xs[idx] > xs[best] {
                        best = idx;
                    }
                }
                out.push(xs[best]);
                argmax.push(best);
            }
        }
    }
    Ok((
        Tensor::new([b, c, oh, ow], out)?,
        PoolContext {
            input_shape: shape,
            argmax,
        },
    ))
}

pub fn maxpool2x2_backward<T: Element>(
    grad_out: &Tensor<T>,
    ctx: &PoolContext,
) -> Result<Tensor<T>> {
    if grad_out.len() != ctx.argmax.len() {
        return Err(Error::layer(
            "maxpool",
            format!(
                "gradient {:?} does not match pooled output",
                grad_out.shape()
            ),
        ));
    }
    let mut gx = vec![T::zero(); ctx.input_shape.iter().product()];
    for (&idx, &g) in ctx.argmax.iter().zip(grad_out.data()) {
        gx[idx] = gx[idx] + g;
    }
    Tensor::new(ctx.input_shape.to_vec(), gx)
}
