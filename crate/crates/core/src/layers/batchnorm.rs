//! Per-channel batch normalization over `[B, C, H, W]` activations.
//!
//! Train mode normalizes with the batch statistics (biased variance) and
//! folds them into the running buffers; the running variance receives the
//! unbiased estimate. Eval mode reads the running buffers only.

use crate::error::{Error, Result};
use crate::layers::dims4;
use crate::tensor::{Element, Mode, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState<T = f32> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: f64,
    pub momentum: f64,
}

impl<T: Element> BatchNormState<T> {
    /// gamma = 1, beta = 0, running mean 0, running variance 1.
    pub fn new(channels: usize) -> Result<Self> {
        Ok(Self {
            gamma: Tensor::full([channels], T::one())?,
            beta: Tensor::zeros([channels])?,
            running_mean: Tensor::zeros([channels])?,
            running_var: Tensor::full([channels], T::one())?,
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

#[derive(Debug, Clone)]
pub struct BatchNormContext<T = f32> {
    mode: Mode,
    shape: [usize; 4],
    x_hat: Vec<T>,
    inv_std: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads<T = f32> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

fn check_channels<T: Element>(name: &str, c: usize, s: &BatchNormState<T>) -> Result<()> {
    if c != s.channels() {
        return Err(Error::layer(
            name,
            format!("expected {} channels, got {c}", s.channels()),
        ));
    }
    Ok(())
}

pub fn batchnorm_forward<T: Element>(
    name: &str,
    x: &Tensor<T>,
    s: &mut BatchNormState<T>,
    mode: Mode,
) -> Result<(Tensor<T>, BatchNormContext<T>)> {
    match mode {
        Mode::Train => batchnorm_forward_train(name, x, s),
        Mode::Eval => batchnorm_forward_eval(name, x, s),
    }
}

pub fn batchnorm_forward_train<T: Element>(
    name: &str,
    x: &Tensor<T>,
    s: &mut BatchNormState<T>,
) -> Result<(Tensor<T>, BatchNormContext<T>)> {
    let shape @ [b, c, h, w] = dims4(name, x.shape())?;
    check_channels(name, c, s)?;
    let m = b * h * w;
    if m < 2 {
        return Err(Error::layer(
            name,
            "train-mode batch norm needs at least 2 values per channel",
        ));
    }
    let hw = h * w;
    let xs = x.data();
    let mut out = vec![T::zero(); xs.len()];
    let mut x_hat = vec![T::zero(); xs.len()];
    let mut inv_std = vec![0.0; c];

    for ch in 0..c {
        let planes = || (0..b).map(move |bi| (bi * c + ch) * hw);
        let mut sum = 0.0;
        for base in planes() {
            for &v in &xs[base..base + hw] {
                sum += v.to_f64_lossy();
            }
        }
        let mean = sum / m as f64;
        let mut sq = 0.0;
        for base in planes() {
            for &v in &xs[base..base + hw] {
                let d = v.to_f64_lossy() - mean;
                sq += d * d;
            }
        }
        let var = sq / m as f64;
        let istd = 1.0 / (var + s.eps).sqrt();
        inv_std[ch] = istd;
        let gamma = s.gamma.data()[ch].to_f64_lossy();
        let beta = s.beta.data()[ch].to_f64_lossy();
        for base in planes() {
            for i in base..base + hw {
                let xh = (xs[i].to_f64_lossy() - mean) * istd;
                x_hat[i] = T::from_f64_lossy(xh);
                out[i] = T::from_f64_lossy(gamma * xh + beta);
            }
        }

        let mom = s.momentum;
        let unbiased = sq / (m - 1) as f64;
        let rm = &mut s.running_mean.data_mut()[ch];
        *rm = T::from_f64_lossy((1.0 - mom) * rm.to_f64_lossy() + mom * mean);
        let rv = &mut s.running_var.data_mut()[ch];
        *rv = T::from_f64_lossy((1.0 - mom) * rv.to_f64_lossy() + mom * unbiased);
    }

    Ok((
        Tensor::new(shape.to_vec(), out)?,
        BatchNormContext {
            mode: Mode::Train,
            shape,
            x_hat,
            inv_std,
        },
    ))
}

pub fn batchnorm_forward_eval<T: Element>(
    name: &str,
    x: &Tensor<T>,
    s: &BatchNormState<T>,
) -> Result<(Tensor<T>, BatchNormContext<T>)> {
    let shape @ [b, c, h, w] = dims4(name, x.shape())?;
    check_channels(name, c, s)?;
    let hw = h * w;
    let inv_std: Vec<f64> = s
        .running_var
        .data()
        .iter()
        .map(|v| 1.0 / (v.to_f64_lossy() + s.eps).sqrt())
        .collect();
    let xs = x.data();
    let mut out = vec![T::zero(); xs.len()];
    for bi in 0..b {
        for ch in 0..c {
            let mean = s.running_mean.data()[ch].to_f64_lossy();
            let gamma = s.gamma.data()[ch].to_f64_lossy();
            let beta = s.beta.data()[ch].to_f64_lossy();
            let base = (bi * c + ch) * hw;
            for i in base..base + hw {
                let xh = (xs[i].to_f64_lossy() - mean) * inv_std[ch];
                out[i] = T::from_f64_lossy(gamma * xh + beta);
            }
        }
    }
    Ok((
        Tensor::new(shape.to_vec(), out)?,
        BatchNormContext {
            mode: Mode::Eval,
            shape,
            x_hat: Vec::new(),
            inv_std,
        },
    ))
}

/// Exact gradient of the train-mode forward, including the path through the
/// batch mean and variance.
pub fn batchnorm_backward<T: Element>(
    name: &str,
    grad_out: &Tensor<T>,
    ctx: &BatchNormContext<T>,
    s: &BatchNormState<T>,
) -> Result<BatchNormGrads<T>> {
    if ctx.mode != Mode::Train {
        return Err(Error::layer(name, "backward requires a train-mode context"));
    }
    let [b, c, h, w] = ctx.shape;
    if grad_out.shape() != ctx.shape {
        return Err(Error::layer(
            name,
            format!(
                "gradient {:?} does not match forward {:?}",
                grad_out.shape(),
                ctx.shape
            ),
        ));
    }
    let hw = h * w;
    let m = (b * hw) as f64;
    let gs = grad_out.data();
    let mut gx = vec![T::zero(); gs.len()];
    let mut g_gamma = vec![T::zero(); c];
    let mut g_beta = vec![T::zero(); c];

    for ch in 0..c {
        let planes = || (0..b).map(move |bi| (bi * c + ch) * hw);
        let mut sum_g = 0.0;
        let mut sum_gx = 0.0;
        for base in planes() {
            for i in base..base + hw {
                let g = gs[i].to_f64_lossy();
                sum_g += g;
                sum_gx += g * ctx.x_hat[i].to_f64_lossy();
            }
        }
        g_beta[ch] = T::from_f64_lossy(sum_g);
        g_gamma[ch] = T::from_f64_lossy(sum_gx);
        let gamma = s.gamma.data()[ch].to_f64_lossy();
        let scale = gamma * ctx.inv_std[ch] / m;
        for base in planes() {
            for i in base..base + hw {
                let g = gs[i].to_f64_lossy();
                let xh = ctx.x_hat[i].to_f64_lossy();
                gx[i] = T::from_f64_lossy(scale * (m * g - sum_g - xh * sum_gx));
            }
        }
    }

    Ok(BatchNormGrads {
        input: Tensor::new(ctx.shape.to_vec(), gx)?,
        gamma: Tensor::new([c], g_gamma)?,
        beta: Tensor::new([c], g_beta)?,
    })
}

/// Input gradient of the eval-mode forward (a fixed per-channel affine map).
pub fn batchnorm_input_grad_eval<T: Element>(
    name: &str,
    grad_out: &Tensor<T>,
    ctx: &BatchNormContext<T>,
    s: &BatchNormState<T>,
) -> Result<Tensor<T>> {
    if ctx.mode != Mode::Eval || grad_out.shape() != ctx.shape {
        return Err(Error::layer(
            name,
            "expected the matching eval-mode context",
        ));
    }
    let [_, c, h, w] = ctx.shape;
    let hw = h * w;
    let data = grad_out
        .data()
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            let ch = (i / hw) % c;
            let k = s.gamma.data()[ch].to_f64_lossy() * ctx.inv_std[ch];
            T::from_f64_lossy(g.to_f64_lossy() * k)
        })
        .collect();
    Tensor::new(ctx.shape.to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::tensor::sample_normal;

    fn channel_stats(y: &Tensor, ch: usize) -> (f64, f64) {
        let s = y.shape();
        let (b, c, hw) = (s[0], s[1], s[2] * s[3]);
        let vals: Vec<f64> = (0..b)
            .flat_map(|bi| {
                y.data()[(bi * c + ch) * hw..][..hw]
                    .iter()
                    .map(|&v| v as f64)
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        (mean, var)
    }

    #[test]
    fn normalizes_random_batch() {
        let mut rng = Rng::new(1);
        let x: Tensor = sample_normal(&mut rng, [4, 3, 2, 2], 3.0, 2.5).unwrap();
        let mut s = BatchNormState::new(3).unwrap();
        let (y, _) = batchnorm_forward("bn", &x, &mut s, Mode::Train).unwrap();
        for ch in 0..3 {
            let (mean, var) = channel_stats(&y, ch);
            assert!(mean.abs() < 1e-5, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-3, "var {var}");
        }
    }

    #[test]
    fn standardized_input_is_fixed_point() {
        // Two values per channel at ±1 give zero mean, unit variance.
        let x = Tensor::new([2, 1, 1, 1], vec![1.0f32, -1.0]).unwrap();
        let mut s = BatchNormState::new(1).unwrap();
        let (y, _) = batchnorm_forward("bn", &x, &mut s, Mode::Train).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_gamma_gives_beta() {
        let mut rng = Rng::new(2);
        let x: Tensor = sample_normal(&mut rng, [2, 2, 3, 3], 0.0, 1.0).unwrap();
        let mut s = BatchNormState::new(2).unwrap();
        s.gamma = Tensor::<f32>::zeros([2]).unwrap();
        s.beta = Tensor::new([2], vec![0.25, -4.0]).unwrap();
        let (y, _) = batchnorm_forward("bn", &x, &mut s, Mode::Train).unwrap();
        for (i, &v) in y.data().iter().enumerate() {
            let ch = (i / 9) % 2;
            assert_eq!(v, s.beta.data()[ch]);
        }
    }

    #[test]
    fn running_stats_update_only_in_train() {
        let x = Tensor::new([2, 1, 1, 2], vec![1.0f32, 3.0, 5.0, 7.0]).unwrap();
        let mut s = BatchNormState::new(1).unwrap();
        batchnorm_forward("bn", &x, &mut s, Mode::Eval).unwrap();
        assert_eq!(s, BatchNormState::new(1).unwrap());

        batchnorm_forward("bn", &x, &mut s, Mode::Train).unwrap();
        // batch mean 4, unbiased variance 20/3
        assert!((s.running_mean.data()[0] - 0.4).abs() < 1e-6);
        let expect = 0.9 + 0.1 * (20.0 / 3.0);
        assert!((s.running_var.data()[0] as f64 - expect).abs() < 1e-6);
    }

    #[test]
    fn train_needs_two_values() {
        let x = Tensor::<f32>::zeros([1, 2, 1, 1]).unwrap();
        let mut s = BatchNormState::new(2).unwrap();
        assert!(batchnorm_forward("bn", &x, &mut s, Mode::Train).is_err());
        assert!(batchnorm_forward("bn", &x, &mut s, Mode::Eval).is_ok());
    }

    #[test]
    fn backward_identities_and_eval_rejection() {
        let mut rng = Rng::new(3);
        let x: Tensor = sample_normal(&mut rng, [3, 2, 2, 2], 0.0, 1.0).unwrap();
        let mut s = BatchNormState::new(2).unwrap();
        let (y, ctx) = batchnorm_forward("bn", &x, &mut s, Mode::Train).unwrap();

        let zero = batchnorm_backward("bn", &Tensor::zeros_like(&y), &ctx, &s).unwrap();
        assert!(zero.input.data().iter().all(|&v| v == 0.0));
        assert!(zero.gamma.data().iter().all(|&v| v == 0.0));
        assert!(zero.beta.data().iter().all(|&v| v == 0.0));

        let g: Tensor = sample_normal(&mut rng, [3, 2, 2, 2], 0.0, 1.0).unwrap();
        let grads = batchnorm_backward("bn", &g, &ctx, &s).unwrap();
        for ch in 0..2 {
            let expect: f32 = (0..3)
                .flat_map(|b| g.data()[(b * 2 + ch) * 4..][..4].to_vec())
                .sum();
            assert!((grads.beta.data()[ch] - expect).abs() < 1e-5);
        }

        let (_, eval_ctx) = batchnorm_forward("bn", &x, &mut s, Mode::Eval).unwrap();
        assert!(batchnorm_backward("bn", &g, &eval_ctx, &s).is_err());
    }
}
