use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone)]
pub struct ReluContext<T = f32> {
    input: Tensor<T>,
}

pub fn relu_forward<T: Element>(x: &Tensor<T>) -> (Tensor<T>, ReluContext<T>) {
    (x.max_scalar(T::zero()), ReluContext { input: x.clone() })
}

/// Passes the gradient where the input was strictly positive; the
/// subgradient at 0 is 0.
pub fn relu_backward<T: Element>(grad_out: &Tensor<T>, ctx: &ReluContext<T>) -> Result<Tensor<T>> {
    if grad_out.shape() != ctx.input.shape() {
        return Err(Error::ShapeMismatch {
            op: "relu backward",
            left: grad_out.shape().to_vec(),
            right: ctx.input.shape().to_vec(),
        });
    }
    let data = grad_out
        .data()
        .iter()
        .zip(ctx.input.data())
        .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(grad_out.shape().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_and_subgradient() {
        let x = Tensor::new([3], vec![-1.0f32, 0.0, 2.0]).unwrap();
        let (y, ctx) = relu_forward(&x);
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
        let g = Tensor::full([3], 5.0f32).unwrap();
        assert_eq!(relu_backward(&g, &ctx).unwrap().data(), &[0.0, 0.0, 5.0]);
        assert!(relu_backward(&Tensor::full([2], 1.0f32).unwrap(), &ctx).is_err());
    }
}
