use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Gradients, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Adam,
    SgdMomentum,
}

/// `v ← momentum·v + g; p ← p − lr·v`
pub fn sgd_momentum_step(
    params: &mut [f32],
    grads: &[f32],
    velocity: &mut [f32],
    lr: f64,
    momentum: f64,
) {
    debug_assert!(params.len() == grads.len() && grads.len() == velocity.len());
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        let nv = momentum * *v as f64 + g as f64;
        *v = nv as f32;
        *p = (*p as f64 - lr * nv) as f32;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam update for step `t` (1-based).
pub fn adam_step(
    params: &mut [f32],
    grads: &[f32],
    m: &mut [f32],
    v: &mut [f32],
    t: u64,
    lr: f64,
    hp: AdamParams,
) {
    debug_assert!(params.len() == grads.len() && m.len() == grads.len() && v.len() == grads.len());
    let c1 = 1.0 - hp.beta1.powf(t as f64);
    let c2 = 1.0 - hp.beta2.powf(t as f64);
    for i in 0..params.len() {
        let g = grads[i] as f64;
        let mi = hp.beta1 * m[i] as f64 + (1.0 - hp.beta1) * g;
        let vi = hp.beta2 * v[i] as f64 + (1.0 - hp.beta2) * g * g;
        m[i] = mi as f32;
        v[i] = vi as f32;
        let step = lr * (mi / c1) / ((vi / c2).sqrt() + hp.eps);
        params[i] = (params[i] as f64 - step) as f32;
    }
}

/// Per-parameter optimizer state for a [`Network`].
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    momentum: f64,
    adam: AdamParams,
    step: u64,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, momentum: f64, adam: AdamParams, net: &Network) -> Self {
        let zeros: Vec<Vec<f32>> = net.params().iter().map(|p| vec![0.0; p.len()]).collect();
        let second = match kind {
            OptimizerKind::Adam => zeros.clone(),
            OptimizerKind::SgdMomentum => Vec::new(),
        };
        Self {
            kind,
            momentum,
            adam,
            step: 0,
            first: zeros,
            second,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, net: &mut Network, grads: &Gradients, lr: f64) -> Result<()> {
        let params = net.params_mut();
        if grads.tensors.len() != params.len() {
            return Err(Error::InvalidArgument(format!(
                "{} gradients for {} parameters",
                grads.tensors.len(),
                params.len()
            )));
        }
        self.step += 1;
        for (i, (p, g)) in params.into_iter().zip(&grads.tensors).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::ShapeMismatch {
                    op: "optimizer step",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
            match self.kind {
                OptimizerKind::SgdMomentum => sgd_momentum_step(
                    p.data_mut(),
                    g.data(),
                    &mut self.first[i],
                    lr,
                    self.momentum,
                ),
                OptimizerKind::Adam => adam_step(
                    p.data_mut(),
                    g.data(),
                    &mut self.first[i],
                    &mut self.second[i],
                    self.step,
                    lr,
                    self.adam,
                ),
            }
        }
        Ok(())
    }
}

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads
        .tensors
        .iter()
        .flat_map(|t| t.data())
        .map(|&g| (g as f64) * (g as f64))
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = (max_norm / norm) as f32;
        for t in &mut grads.tensors {
            t.data_mut().iter_mut().for_each(|g| *g *= scale);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(p: &[f32]) -> f64 {
        p.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt()
    }

    fn bowl_start() -> Vec<f32> {
        vec![1.0, -2.0, 0.5, 3.0]
    }

    #[test]
    fn zero_momentum_is_gradient_descent() {
        let mut p = vec![1.0f32, -1.0];
        let mut v = vec![0.0f32; 2];
        sgd_momentum_step(&mut p, &[0.5, 0.25], &mut v, 0.1, 0.0);
        assert_eq!(p, vec![1.0 - 0.05, -1.0 - 0.025]);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let start = bowl_start();
        let zeros = vec![0.0f32; 4];
        let (mut p, mut v) = (start.clone(), zeros.clone());
        for _ in 0..10 {
            sgd_momentum_step(&mut p, &zeros, &mut v, 0.1, 0.9);
        }
        assert_eq!(p, start);
        let (mut p, mut m, mut v) = (start.clone(), zeros.clone(), zeros.clone());
        for t in 1..=100 {
            adam_step(
                &mut p,
                &zeros,
                &mut m,
                &mut v,
                t,
                1e-3,
                AdamParams::default(),
            );
        }
        assert_eq!(p, start);
    }

    #[test]
    fn sgd_momentum_bowl_converges() {
        // f(p) = ½‖p‖², so the gradient is p itself.
        let mut p = bowl_start();
        let mut v = vec![0.0f32; 4];
        let mut steps = 0;
        while norm(&p) >= 1e-3 {
            let g = p.clone();
            sgd_momentum_step(&mut p, &g, &mut v, 0.1, 0.9);
            steps += 1;
            assert!(steps <= 200, "not converged after 200 steps: {}", norm(&p));
        }
    }

    #[test]
    fn adam_bowl_converges() {
        let mut p = bowl_start();
        let (mut m, mut v) = (vec![0.0f32; 4], vec![0.0f32; 4]);
        for t in 1..=2000 {
            let g = p.clone();
            adam_step(&mut p, &g, &mut m, &mut v, t, 0.01, AdamParams::default());
        }
        assert!(norm(&p) < 1e-3, "{}", norm(&p));
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        let start = vec![0.3f32, -0.7, 1.5, 0.0];
        let g = [2.0f32, -0.01, 1e-3, -5.0];
        let mut p = start.clone();
        let (mut m, mut v) = (vec![0.0f32; 4], vec![0.0f32; 4]);
        adam_step(&mut p, &g, &mut m, &mut v, 1, 1e-3, AdamParams::default());
        for i in 0..4 {
            let update = (start[i] - p[i]) as f64;
            assert!(
                (update - 1e-3 * (g[i] as f64).signum()).abs() < 1e-6,
                "{i}: {update}"
            );
        }
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let t = crate::tensor::Tensor::new([2], vec![3.0f32, 4.0]).unwrap();
        let mut g = Gradients { tensors: vec![t] };
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((norm(g.tensors[0].data()) - 1.0).abs() < 1e-6);
        assert_eq!(clip_global_norm(&mut g, 10.0), norm(g.tensors[0].data()));
    }
}
