use crate::error::{Error, Result};
use crate::nn::ops::softmax;
use crate::tensor::{Scalar, Tensor};

/// Probabilities below this are clamped before taking the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Single-sample weighted cross-entropy.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossEntropy {
    pub loss: f64,
    /// Gradient with respect to the logits that produced `probs`.
    pub grad_logits: Vec<f64>,
    /// Set when the true-class probability hit [`PROB_FLOOR`].
    pub clamped: bool,
}

/// `-w[label] · ln p[label]` for softmax probabilities `probs`. The gradient
/// through the softmax is `w[label] · (p - onehot(label))`.
pub fn weighted_cross_entropy(probs: &[f64], label: usize, weights: &[f64]) -> Result<CrossEntropy> {
    if label >= probs.len() {
        return Err(Error::InvalidConfig(format!("label {label} out of range for {} classes", probs.len())));
    }
    if weights.len() != probs.len() {
        return Err(Error::LengthMismatch { expected: probs.len(), actual: weights.len() });
    }
    let w = weights[label];
    let p = probs[label];
    let clamped = p < PROB_FLOOR;
    let loss = -w * p.max(PROB_FLOOR).ln();
    let grad_logits = probs
        .iter()
        .enumerate()
        .map(|(i, &q)| w * (q - if i == label { 1.0 } else { 0.0 }))
        .collect();
    Ok(CrossEntropy { loss, grad_logits, clamped })
}

/// Inverse-frequency class weights `N / (K · n_c)`; balanced counts give
/// all ones and `Σ n_c · w_c = N`.
pub fn class_weights(counts: &[usize]) -> Result<Vec<f64>> {
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::InvalidConfig(format!("class {c} has no samples")));
    }
    if counts.is_empty() {
        return Err(Error::InvalidConfig("no classes".into()));
    }
    let total: usize = counts.iter().sum();
    let k = counts.len() as f64;
    Ok(counts.iter().map(|&n| total as f64 / (k * n as f64)).collect())
}

/// Mean squared error over the outputs of one sample and its gradient.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::LengthMismatch { expected: target.len(), actual: pred.len() });
    }
    let n = pred.len() as f64;
    let loss = pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n;
    let grad = pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect();
    Ok((loss, grad))
}

/// Batch loss averaged over samples, with its gradient w.r.t. the logits.
#[derive(Clone, Debug)]
pub struct BatchLoss<T> {
    pub loss: f64,
    pub grad: Tensor<T>,
    pub clamped: usize,
}

pub fn cross_entropy_batch<T: Scalar>(logits: &Tensor<T>, labels: &[usize], weights: Option<&[f64]>) -> Result<BatchLoss<T>> {
    let (n, k) = match logits.shape() {
        [n, k] => (*n, *k),
        s => return Err(Error::ShapeMismatch { op: "cross entropy", left: s.to_vec(), right: vec![] }),
    };
    if labels.len() != n {
        return Err(Error::LengthMismatch { expected: n, actual: labels.len() });
    }
    let ones = vec![1.0; k];
    let weights = weights.unwrap_or(&ones);
    let probs = softmax(logits);
    let mut grad = Vec::with_capacity(n * k);
    let (mut total, mut clamped) = (0.0, 0);
    for (row, &label) in probs.data().chunks(k).zip(labels) {
        let p: Vec<f64> = row.iter().map(|v| v.as_f64()).collect();
        let ce = weighted_cross_entropy(&p, label, weights)?;
        total += ce.loss;
        clamped += usize::from(ce.clamped);
        grad.extend(ce.grad_logits.iter().map(|&g| T::from_f64(g / n as f64)));
    }
    Ok(BatchLoss { loss: total / n as f64, grad: Tensor::from_data(&[n, k], grad)?, clamped })
}

pub fn mse_batch<T: Scalar>(pred: &Tensor<T>, targets: &[Vec<f64>]) -> Result<BatchLoss<T>> {
    let (n, k) = match pred.shape() {
        [n, k] => (*n, *k),
        s => return Err(Error::ShapeMismatch { op: "mse", left: s.to_vec(), right: vec![] }),
    };
    if targets.len() != n {
        return Err(Error::LengthMismatch { expected: n, actual: targets.len() });
    }
    let mut grad = Vec::with_capacity(n * k);
    let mut total = 0.0;
    for (row, target) in pred.data().chunks(k).zip(targets) {
        let p: Vec<f64> = row.iter().map(|v| v.as_f64()).collect();
        let (loss, g) = mse_loss(&p, target)?;
        total += loss;
        grad.extend(g.iter().map(|&v| T::from_f64(v / n as f64)));
    }
    Ok(BatchLoss { loss: total / n as f64, grad: Tensor::from_data(&[n, k], grad)?, clamped: 0 })
}
