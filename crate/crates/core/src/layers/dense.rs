//! Fully connected layer: `out = x · Wᵀ + b`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<T = f32> {
    /// `[out, in]`
    pub weights: Tensor<T>,
    /// `[out]`
    pub bias: Tensor<T>,
}

impl<T: Element> DenseParams<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        match weights.shape() {
            &[out, _] if bias.shape() == [out] => Ok(Self { weights, bias }),
            _ => Err(Error::ShapeMismatch {
                op: "dense params",
                left: weights.shape().to_vec(),
                right: bias.shape().to_vec(),
            }),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone)]
pub struct DenseContext<T = f32> {
    input: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct DenseGrads<T = f32> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn dense_forward<T: Element>(
    name: &str,
    x: &Tensor<T>,
    p: &DenseParams<T>,
) -> Result<(Tensor<T>, DenseContext<T>)> {
    let (n_in, n_out) = (p.inputs(), p.outputs());
    let batch = match x.shape() {
        &[b, i] if i == n_in => b,
        s => {
            return Err(Error::layer(
                name,
                format!("expected input [B, {n_in}], got {s:?}"),
            ))
        }
    };
    let xs = x.data();
    let ws = p.weights.data();
    let bs = p.bias.data();
    let mut out = vec![T::zero(); batch * n_out];
    out.par_iter_mut().enumerate().for_each(|(idx, slot)| {
        let (b, o) = (idx / n_out, idx % n_out);
        let row = &xs[b * n_in..][..n_in];
        let wrow = &ws[o * n_in..][..n_in];
        let mut acc = T::zero();
        for (&a, &w) in row.iter().zip(wrow) {
            acc = acc + a * w;
        }
        *slot = acc + bs[o];
    });
    Ok((
        Tensor::new([batch, n_out], out)?,
        DenseContext { input: x.clone() },
    ))
}

pub fn dense_backward<T: Element>(
    name: &str,
    grad_out: &Tensor<T>,
    ctx: &DenseContext<T>,
    p: &DenseParams<T>,
) -> Result<DenseGrads<T>> {
    let (n_in, n_out) = (p.inputs(), p.outputs());
    let batch = ctx.input.shape()[0];
    if grad_out.shape() != [batch, n_out] {
        return Err(Error::layer(
            name,
            format!(
                "gradient {:?} does not match output [{batch}, {n_out}]",
                grad_out.shape()
            ),
        ));
    }
    let xs = ctx.input.data();
    let gs = grad_out.data();
    let ws = p.weights.data();

    let mut gw = vec![T::zero(); n_out * n_in];
    gw.par_chunks_mut(n_in).enumerate().for_each(|(o, row)| {
        for b in 0..batch {
            let g = gs[b * n_out + o];
            let xrow = &xs[b * n_in..][..n_in];
            for (d, &x) in row.iter_mut().zip(xrow) {
                *d = *d + g * x;
            }
        }
    });
    let gb: Vec<T> = (0..n_out)
        .map(|o| (0..batch).fold(T::zero(), |acc, b| acc + gs[b * n_out + o]))
        .collect();
    let mut gx = vec![T::zero(); batch * n_in];
    gx.par_chunks_mut(n_in).enumerate().for_each(|(b, row)| {
        for o in 0..n_out {
            let g = gs[b * n_out + o];
            let wrow = &ws[o * n_in..][..n_in];
            for (d, &w) in row.iter_mut().zip(wrow) {
                *d = *d + g * w;
            }
        }
    });

    Ok(DenseGrads {
        input: Tensor::new([batch, n_in], gx)?,
        weights: Tensor::new([n_out, n_in], gw)?,
        bias: Tensor::new([n_out], gb)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::tensor::sample_normal;

    #[test]
    fn zero_weights_yield_bias() {
        let p = DenseParams::new(
            Tensor::<f32>::zeros([3, 5]).unwrap(),
            Tensor::new([3], vec![1.0f32, -2.0, 0.5]).unwrap(),
        )
        .unwrap();
        let x: Tensor = sample_normal(&mut Rng::new(1), [2, 5], 0.0, 10.0).unwrap();
        let (y, _) = dense_forward("fc", &x, &p).unwrap();
        assert_eq!(y.data(), &[1.0, -2.0, 0.5, 1.0, -2.0, 0.5]);
    }

    #[test]
    fn matches_matmul_route() {
        let mut rng = Rng::new(2);
        let x: Tensor = sample_normal(&mut rng, [4, 6], 0.0, 1.0).unwrap();
        let w: Tensor = sample_normal(&mut rng, [3, 6], 0.0, 1.0).unwrap();
        let p = DenseParams::new(w.clone(), Tensor::<f32>::zeros([3]).unwrap()).unwrap();
        let (y, _) = dense_forward("fc", &x, &p).unwrap();
        let wt = Tensor::from_fn([6, 3], |i| w.data()[(i % 3) * 6 + i / 3]).unwrap();
        let expect = x.matmul(&wt).unwrap();
        for (a, b) in y.data().iter().zip(expect.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn reference_fc1_shape() {
        let p = DenseParams::new(
            Tensor::<f32>::zeros([120, 44_944]).unwrap(),
            Tensor::<f32>::zeros([120]).unwrap(),
        )
        .unwrap();
        let (y, _) = dense_forward("fc1", &Tensor::<f32>::zeros([1, 44_944]).unwrap(), &p).unwrap();
        assert_eq!(y.shape(), &[1, 120]);
        assert!(dense_forward("fc1", &Tensor::<f32>::zeros([1, 400]).unwrap(), &p).is_err());
    }
}
