//! Valid (unpadded), stride-1 2-D cross-correlation.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::layers::dims4;
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T = f32> {
    /// `[out_ch, in_ch, k, k]`
    pub weights: Tensor<T>,
    /// `[out_ch]`
    pub bias: Tensor<T>,
}

impl<T: Element> ConvParams<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let [out_ch, _, kh, kw] = dims4("conv", weights.shape())?;
        if kh != kw {
            return Err(Error::layer(
                "conv",
                format!("kernel must be square, got {kh}x{kw}"),
            ));
        }
        if bias.shape() != [out_ch] {
            return Err(Error::ShapeMismatch {
                op: "conv bias",
                left: weights.shape().to_vec(),
                right: bias.shape().to_vec(),
            });
        }
        Ok(Self { weights, bias })
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weights.shape()[2]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone)]
pub struct ConvContext<T = f32> {
    input: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T = f32> {
    pub input: Option<Tensor<T>>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_forward<T: Element>(
    name: &str,
    x: &Tensor<T>,
    p: &ConvParams<T>,
) -> Result<(Tensor<T>, ConvContext<T>)> {
    let [b, cin, h, w] = dims4(name, x.shape())?;
    let k = p.kernel();
    if cin != p.in_channels() {
        return Err(Error::layer(
            name,
            format!("expected {} input channels, got {cin}", p.in_channels()),
        ));
    }
    if h < k || w < k {
        return Err(Error::layer(
            name,
            format!("input {h}x{w} smaller than {k}x{k} kernel"),
        ));
    }
    let cout = p.out_channels();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let xs = x.data();
    let ws = p.weights.data();
    let bs = p.bias.data();

    let mut out = vec![T::zero(); b * cout * oh * ow];
    out.par_chunks_mut(oh * ow)
        .enumerate()
        .for_each(|(plane, dst)| {
            let (bi, o) = (plane / cout, plane % cout);
            dst.fill(bs[o]);
            for c in 0..cin {
                let src = &xs[(bi * cin + c) * h * w..][..h * w];
                let kern = &ws[(o * cin + c) * k * k..][..k * k];
                for u in 0..k {
                    for v in 0..k {
                        let wv = kern[u * k + v];
                        for i in 0..oh {
                            let srow = &src[(i + u) * w + v..][..ow];
                            let drow = &mut dst[i * ow..][..ow];
                            for (d, &s) in drow.iter_mut().zip(srow) {
                                *d = *d + wv * s;
                            }
                        }
                    }
                }
            }
        });
    let out = Tensor::new([b, cout, oh, ow], out)?;
    Ok((out, ConvContext { input: x.clone() }))
}

/// Gradients of the forward contract. `need_input_grad = false` skips the
/// input gradient (first layer during training).
pub fn conv2d_backward<T: Element>(
    name: &str,
    grad_out: &Tensor<T>,
    ctx: &ConvContext<T>,
    p: &ConvParams<T>,
    need_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let [b, cin, h, w] = dims4(name, ctx.input.shape())?;
    let k = p.kernel();
    let cout = p.out_channels();
    let (oh, ow) = (h - k + 1, w - k + 1);
    if grad_out.shape() != [b, cout, oh, ow] || cin != p.in_channels() {
        return Err(Error::layer(
            name,
            format!(
                "gradient {:?} does not match forward output [{b}, {cout}, {oh}, {ow}]",
                grad_out.shape()
            ),
        ));
    }
    let xs = ctx.input.data();
    let gs = grad_out.data();
    let ws = p.weights.data();

    let grad_b: Vec<T> = (0..cout)
        .into_par_iter()
        .map(|o| {
            let mut acc = T::zero();
            for bi in 0..b {
                for &g in &gs[(bi * cout + o) * oh * ow..][..oh * ow] {
                    acc = acc + g;
                }
            }
            acc
        })
        .collect();

    // One task per (o, c) kernel slice; accumulation order is fixed inside.
    let mut grad_w = vec![T::zero(); cout * cin * k * k];
    grad_w
        .par_chunks_mut(k * k)
        .enumerate()
        .for_each(|(slice, dst)| {
            let (o, c) = (slice / cin, slice % cin);
            for u in 0..k {
                for v in 0..k {
                    let mut acc = T::zero();
                    for bi in 0..b {
                        let g = &gs[(bi * cout + o) * oh * ow..][..oh * ow];
                        let src = &xs[(bi * cin + c) * h * w..][..h * w];
                        for i in 0..oh {
                            let srow = &src[(i + u) * w + v..][..ow];
                            let grow = &g[i * ow..][..ow];
                            for (&gv, &sv) in grow.iter().zip(srow) {
                                acc = acc + gv * sv;
                            }
                        }
                    }
                    dst[u * k + v] = acc;
                }
            }
        });

    let grad_x = if need_input_grad {
        let mut gx = vec![T::zero(); b * cin * h * w];
        gx.par_chunks_mut(h * w)
            .enumerate()
            .for_each(|(plane, dst)| {
                let (bi, c) = (plane / cin, plane % cin);
                for o in 0..cout {
                    let g = &gs[(bi * cout + o) * oh * ow..][..oh * ow];
                    let kern = &ws[(o * cin + c) * k * k..][..k * k];
                    for u in 0..k {
                        for v in 0..k {
                            let wv = kern[u * k + v];
                            for i in 0..oh {
                                let drow = &mut dst[(i + u) * w + v..][..ow];
                                let grow = &g[i * ow..][..ow];
                                for (d, &gv) in drow.iter_mut().zip(grow) {
                                    *d = *d + wv * gv;
                                }
                            }
                        }
                    }
                }
            });
        Some(Tensor::new([b, cin, h, w], gx)?)
    } else {
        None
    };

    Ok(ConvGrads {
        input: grad_x,
        weights: Tensor::new(p.weights.shape().to_vec(), grad_w)?,
        bias: Tensor::new([cout], grad_b)?,
    })
}
