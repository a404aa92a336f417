//! Finite-difference verification of every layer backward.
//!
//! All checks run the layer kernels instantiated at `f64`. Each layer output
//! is reduced to a scalar through a fixed random projection `Σ out · r`, so
//! every output element contributes to the checked gradient.

use std::fmt;

use crate::error::Result;
use crate::layers::*;
use crate::rng::Rng;
use crate::tensor::{sample_normal, Mode, Tensor};

pub const FD_STEP: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} over {} elements, max rel err {:.3e} at {} (tol {:.0e})",
            self.name,
            if self.passed() { "PASS" } else { "FAIL" },
            self.checked,
            self.max_rel_error,
            self.worst_index,
            self.tolerance
        )
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of `f` around `x`.
pub fn gradient_check(
    name: impl Into<String>,
    x: &[f64],
    analytic: &[f64],
    f: impl Fn(&[f64]) -> f64,
    tolerance: f64,
) -> GradCheckReport {
    assert_eq!(x.len(), analytic.len(), "gradient length must match input");
    let mut probe = x.to_vec();
    let mut worst = (0.0, 0);
    for i in 0..x.len() {
        probe[i] = x[i] + FD_STEP;
        let up = f(&probe);
        probe[i] = x[i] - FD_STEP;
        let down = f(&probe);
        probe[i] = x[i];
        let numeric = (up - down) / (2.0 * FD_STEP);
        let err = relative_error(analytic[i], numeric);
        if err > worst.0 || err.is_nan() {
            worst = (err, i);
        }
    }
    GradCheckReport {
        name: name.into(),
        checked: x.len(),
        max_rel_error: worst.0,
        worst_index: worst.1,
        tolerance,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    BatchNorm,
    Relu,
    MaxPool,
    Dense,
    Dropout,
    SoftmaxCrossEntropy,
}

impl LayerKind {
    pub const ALL: [LayerKind; 7] = [
        LayerKind::Conv,
        LayerKind::BatchNorm,
        LayerKind::Relu,
        LayerKind::MaxPool,
        LayerKind::Dense,
        LayerKind::Dropout,
        LayerKind::SoftmaxCrossEntropy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv2d",
            LayerKind::BatchNorm => "batchnorm",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool => "maxpool2x2",
            LayerKind::Dense => "dense",
            LayerKind::Dropout => "dropout",
            LayerKind::SoftmaxCrossEntropy => "softmax_cross_entropy",
        }
    }
}

fn projection(rng: &mut Rng, shape: &[usize]) -> Result<Tensor<f64>> {
    sample_normal(rng, shape.to_vec(), 0.0, 1.0)
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn with_data(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data.to_vec()).expect("probe keeps shape")
}

/// Checks every gradient a layer type produces on a small random instance.
pub fn check_layer(kind: LayerKind, seed: u64, tolerance: f64) -> Result<Vec<GradCheckReport>> {
    let mut rng = Rng::new(seed);
    let label = |part: &str| format!("{}.{part}[seed {seed}]", kind.name());
    let mut reports = Vec::new();
    match kind {
        LayerKind::Conv => {
            let x = sample_normal::<f64>(&mut rng, [1, 2, 6, 6], 0.0, 1.0)?;
            let p = ConvParams::new(
                sample_normal(&mut rng, [3, 2, 5, 5], 0.0, 0.5)?,
                sample_normal(&mut rng, [3], 0.0, 0.5)?,
            )?;
            let (y, ctx) = conv2d_forward("conv", &x, &p)?;
            let r = projection(&mut rng, y.shape())?;
            let g = conv2d_backward("conv", &r, &ctx, &p, true)?;
            let obj = |x: &Tensor<f64>, p: &ConvParams<f64>| {
                dot(&conv2d_forward("conv", x, p).expect("valid").0, &r)
            };
            let gi = g.input.expect("requested");
            reports.push(gradient_check(
                label("input"),
                x.data(),
                gi.data(),
                |d| obj(&with_data(x.shape(), d), &p),
                tolerance,
            ));
            reports.push(gradient_check(
                label("weights"),
                p.weights.data(),
                g.weights.data(),
                |d| {
                    let mut q = p.clone();
                    q.weights = with_data(p.weights.shape(), d);
                    obj(&x, &q)
                },
                tolerance,
            ));
            reports.push(gradient_check(
                label("bias"),
                p.bias.data(),
                g.bias.data(),
                |d| {
                    let mut q = p.clone();
                    q.bias = with_data(p.bias.shape(), d);
                    obj(&x, &q)
                },
                tolerance,
            ));
        }
        LayerKind::BatchNorm => {
            let x = sample_normal::<f64>(&mut rng, [4, 3, 2, 2], 0.5, 2.0)?;
            let mut s = BatchNormState::<f64>::new(3)?;
            s.gamma = sample_normal(&mut rng, [3], 1.0, 0.3)?;
            s.beta = sample_normal(&mut rng, [3], 0.0, 0.3)?;
            let (y, ctx) = batchnorm_forward("bn", &x, &mut s.clone(), Mode::Train)?;
            let r = projection(&mut rng, y.shape())?;
            let g = batchnorm_backward("bn", &r, &ctx, &s)?;
            let obj = |x: &Tensor<f64>, s: &BatchNormState<f64>| {
                dot(
                    &batchnorm_forward("bn", x, &mut s.clone(), Mode::Train)
                        .expect("valid")
                        .0,
                    &r,
                )
            };
            reports.push(gradient_check(
                label("input"),
                x.data(),
                g.input.data(),
                |d| obj(&with_data(x.shape(), d), &s),
                tolerance,
            ));
            reports.push(gradient_check(
                label("gamma"),
                s.gamma.data(),
                g.gamma.data(),
                |d| {
                    let mut q = s.clone();
                    q.gamma = with_data(&[3], d);
                    obj(&x, &q)
                },
                tolerance,
            ));
            reports.push(gradient_check(
                label("beta"),
                s.beta.data(),
                g.beta.data(),
                |d| {
                    let mut q = s.clone();
                    q.beta = with_data(&[3], d);
                    obj(&x, &q)
                },
                tolerance,
            ));
        }
        LayerKind::Relu => {
            // Keep every input at least 0.05 away from the kink.
            let x = Tensor::<f64>::from_fn([2, 3, 4, 4], |_| {
                let mag = rng.uniform_range(0.05, 2.0);
                if rng.uniform() < 0.5 {
                    -mag
                } else {
                    mag
                }
            })?;
            let (y, ctx) = relu_forward(&x);
            let r = projection(&mut rng, y.shape())?;
            let gi = relu_backward(&r, &ctx)?;
            reports.push(gradient_check(
                label("input"),
                x.data(),
                gi.data(),
                |d| dot(&relu_forward(&with_data(x.shape(), d)).0, &r),
                tolerance,
            ));
        }
        LayerKind::MaxPool => {
            // Distinct values spaced 0.05 apart, so a ±h probe never changes a window's winner.
            let n = 2 * 2 * 6 * 5;
            let mut order: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut order);
            let x = Tensor::<f64>::new(
                [2, 2, 6, 5],
                order.iter().map(|&v| v as f64 * 0.05 - 3.0).collect(),
            )?;
            let (y, ctx) = maxpool2x2_forward("pool", &x)?;
            let r = projection(&mut rng, y.shape())?;
            let gi = maxpool2x2_backward(&r, &ctx)?;
            reports.push(gradient_check(
                label("input"),
                x.data(),
                gi.data(),
                |d| {
                    dot(
                        &maxpool2x2_forward("pool", &with_data(x.shape(), d))
                            .expect("valid")
                            .0,
                        &r,
                    )
                },
                tolerance,
            ));
        }
        LayerKind::Dense => {
            let x = sample_normal::<f64>(&mut rng, [3, 5], 0.0, 1.0)?;
            let p = DenseParams::new(
                sample_normal(&mut rng, [3, 5], 0.0, 0.5)?,
                sample_normal(&mut rng, [3], 0.0, 0.5)?,
            )?;
            let (y, ctx) = dense_forward("fc", &x, &p)?;
            let r = projection(&mut rng, y.shape())?;
            let g = dense_backward("fc", &r, &ctx, &p)?;
            let obj = |x: &Tensor<f64>, p: &DenseParams<f64>| {
                dot(&dense_forward("fc", x, p).expect("valid").0, &r)
            };
            reports.push(gradient_check(
                label("input"),
                x.data(),
                g.input.data(),
                |d| obj(&with_data(x.shape(), d), &p),
                tolerance,
            ));
            reports.push(gradient_check(
                label("weights"),
                p.weights.data(),
                g.weights.data(),
                |d| {
                    let mut q = p.clone();
                    q.weights = with_data(p.weights.shape(), d);
                    obj(&x, &q)
                },
                tolerance,
            ));
            reports.push(gradient_check(
                label("bias"),
                p.bias.data(),
                g.bias.data(),
                |d| {
                    let mut q = p.clone();
                    q.bias = with_data(p.bias.shape(), d);
                    obj(&x, &q)
                },
                tolerance,
            ));
        }
        LayerKind::Dropout => {
            let x = sample_normal::<f64>(&mut rng, [4, 10], 0.0, 1.0)?;
            let mask_rng = rng.derive();
            let (y, ctx) = dropout_forward(&x, 0.2, Mode::Train, &mut mask_rng.clone())?;
            let r = projection(&mut rng, y.shape())?;
            let gi = dropout_backward(&r, &ctx)?;
            reports.push(gradient_check(
                label("input"),
                x.data(),
                gi.data(),
                |d| {
                    let (y, _) = dropout_forward(
                        &with_data(x.shape(), d),
                        0.2,
                        Mode::Train,
                        &mut mask_rng.clone(),
                    )
                    .expect("valid");
                    dot(&y, &r)
                },
                tolerance,
            ));
        }
        LayerKind::SoftmaxCrossEntropy => {
            let logits = sample_normal::<f64>(&mut rng, [4, 5], 0.0, 2.0)?;
            let labels: Vec<usize> = (0..4).map(|_| (rng.next_u64() % 5) as usize).collect();
            let out = softmax_cross_entropy(&logits, &labels)?;
            reports.push(gradient_check(
                label("logits"),
                logits.data(),
                out.grad_logits.data(),
                |d| {
                    softmax_cross_entropy(&with_data(logits.shape(), d), &labels)
                        .expect("valid")
                        .loss
                },
                tolerance,
            ));
        }
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weight_linear_layer_matches() {
        let p =
            DenseParams::<f64>::new(Tensor::zeros([2, 3]).unwrap(), Tensor::zeros([2]).unwrap())
                .unwrap();
        let x = Tensor::new([1, 3], vec![0.3, -0.2, 1.0]).unwrap();
        let (_, ctx) = dense_forward("fc", &x, &p).unwrap();
        let r = Tensor::new([1, 2], vec![1.0, -1.0]).unwrap();
        let g = dense_backward("fc", &r, &ctx, &p).unwrap();
        let report = gradient_check(
            "fc.input",
            x.data(),
            g.input.data(),
            |d| {
                dot(
                    &dense_forward("fc", &with_data(&[1, 3], d), &p).unwrap().0,
                    &r,
                )
            },
            1e-4,
        );
        assert!(report.passed(), "{report}");
        assert_eq!(report.max_rel_error, 0.0);
    }

    #[test]
    fn every_layer_passes() {
        for kind in LayerKind::ALL {
            for seed in 0..3 {
                for report in check_layer(kind, seed, 1e-4).unwrap() {
                    assert!(report.passed(), "{report}");
                }
            }
        }
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let mut rng = Rng::new(9);
        let x = sample_normal::<f64>(&mut rng, [3, 5], 0.0, 1.0).unwrap();
        let p = DenseParams::new(
            sample_normal(&mut rng, [3, 5], 0.0, 0.5).unwrap(),
            sample_normal(&mut rng, [3], 0.0, 0.5).unwrap(),
        )
        .unwrap();
        let (y, ctx) = dense_forward("fc", &x, &p).unwrap();
        let r = projection(&mut rng, y.shape()).unwrap();
        let g = dense_backward("fc", &r, &ctx, &p).unwrap();
        let corrupted: Vec<f64> = g.input.data().iter().map(|v| v * 1.01).collect();
        let report = gradient_check(
            "fc.input",
            x.data(),
            &corrupted,
            |d| {
                dot(
                    &dense_forward("fc", &with_data(x.shape(), d), &p).unwrap().0,
                    &r,
                )
            },
            1e-4,
        );
        assert!(!report.passed(), "{report}");
    }
}
