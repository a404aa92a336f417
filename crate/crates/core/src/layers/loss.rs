use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone)]
pub struct LossOutput<T = f32> {
    /// Mean negative log-likelihood over the batch.
    pub loss: f64,
    /// `(probs - one_hot) / B`
    pub grad_logits: Tensor<T>,
    pub probs: Tensor<T>,
}

/// Row-wise softmax with max subtraction.
pub fn softmax<T: Element>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let n = match logits.shape() {
        &[_, n] => n,
        s => {
            return Err(Error::InvalidArgument(format!(
                "softmax expects [B, N], got {s:?}"
            )))
        }
    };
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks(n) {
        let max = row
            .iter()
            .fold(f64::NEG_INFINITY, |m, v| m.max(v.to_f64_lossy()));
        let exps: Vec<f64> = row.iter().map(|v| (v.to_f64_lossy() - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| T::from_f64_lossy(e / total)));
    }
    Tensor::new(logits.shape().to_vec(), out)
}

pub fn softmax_cross_entropy<T: Element>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<LossOutput<T>> {
    let (b, n) = match logits.shape() {
        &[b, n] if b == labels.len() => (b, n),
        s => {
            return Err(Error::InvalidArgument(format!(
                "logits {s:?} do not match {} labels",
                labels.len()
            )))
        }
    };
    if let Some(&bad) = labels.iter().find(|&&l| l >= n) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {n} classes"
        )));
    }
    let mut loss = 0.0;
    let mut probs = Vec::with_capacity(b * n);
    let mut grad = Vec::with_capacity(b * n);
    for (row, &label) in logits.data().chunks(n).zip(labels) {
        let max = row
            .iter()
            .fold(f64::NEG_INFINITY, |m, v| m.max(v.to_f64_lossy()));
        let shifted: Vec<f64> = row.iter().map(|v| v.to_f64_lossy() - max).collect();
        let log_z = shifted.iter().map(|s| s.exp()).sum::<f64>().ln();
        loss -= shifted[label] - log_z;
        for (j, s) in shifted.iter().enumerate() {
            let p = (s - log_z).exp();
            probs.push(T::from_f64_lossy(p));
            let target = if j == label { 1.0 } else { 0.0 };
            grad.push(T::from_f64_lossy((p - target) / b as f64));
        }
    }
    Ok(LossOutput {
        loss: loss / b as f64,
        grad_logits: Tensor::new([b, n], grad)?,
        probs: Tensor::new([b, n], probs)?,
    })
}
