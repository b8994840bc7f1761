use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const BN_EPSILON: f64 = 1e-3;
pub const BN_MOMENTUM: f64 = 0.99;

/// Batch normalisation over the trailing (channel) axis.
///
/// Training normalises with biased batch statistics and folds them into the
/// running estimates as `running = momentum * running + (1 - momentum) * batch`.
/// Inference uses the running estimates only.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T> {
    pub(crate) gamma: Tensor<T>,
    pub(crate) beta: Tensor<T>,
    pub(crate) running_mean: Tensor<T>,
    pub(crate) running_var: Tensor<T>,
    epsilon: T,
    momentum: T,
}

/// Values retained from a training-mode forward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    normalized: Vec<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize) -> Result<Self> {
        Ok(Self {
            gamma: Tensor::full(&[channels], T::one())?,
            beta: Tensor::zeros(&[channels])?,
            running_mean: Tensor::zeros(&[channels])?,
            running_var: Tensor::full(&[channels], T::one())?,
            epsilon: T::from_f64(BN_EPSILON),
            momentum: T::from_f64(BN_MOMENTUM),
        })
    }

    pub fn from_parts(gamma: Tensor<T>, beta: Tensor<T>, running_mean: Tensor<T>, running_var: Tensor<T>) -> Result<Self> {
        let c = gamma.len();
        for (name, t) in [("beta", &beta), ("moving mean", &running_mean), ("moving variance", &running_var)] {
            if t.shape() != [c] {
                return Err(Error::InvalidConfig(format!("batchnorm {name} has shape {:?}, expected [{c}]", t.shape())));
            }
        }
        if running_var.data().iter().any(|&v| v < T::zero()) {
            return Err(Error::InvalidConfig("batchnorm variance must be non-negative".into()));
        }
        let mut bn = Self::new(c)?;
        bn.gamma = gamma;
        bn.beta = beta;
        bn.running_mean = running_mean;
        bn.running_var = running_var;
        Ok(bn)
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, input: &Tensor<T>) -> Result<usize> {
        let c = self.channels();
        if input.shape().last() != Some(&c) {
            return Err(Error::ShapeMismatch { op: "batchnorm", left: input.shape().to_vec(), right: vec![c] });
        }
        Ok(c)
    }

    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let c = self.check(input)?;
        let scale: Vec<T> = (0..c)
            .map(|i| self.gamma.data()[i] / (self.running_var.data()[i] + self.epsilon).sqrt())
            .collect();
        let mut out = input.clone();
        for px in out.data_mut().chunks_mut(c) {
            for (i, v) in px.iter_mut().enumerate() {
                *v = (*v - self.running_mean.data()[i]) * scale[i] + self.beta.data()[i];
            }
        }
        Ok(out)
    }

    pub fn forward_train(&mut self, input: &Tensor<T>) -> Result<(Tensor<T>, BatchNormCache<T>)> {
        let c = self.check(input)?;
        let count = input.len() / c;
        if count == 0 {
            return Err(Error::InvalidConfig("batchnorm needs a non-empty batch in training mode".into()));
        }
        let m = T::from_f64(count as f64);
        let mut mean = vec![T::zero(); c];
        for px in input.data().chunks(c) {
            for (acc, &v) in mean.iter_mut().zip(px) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v = *v / m);
        let mut var = vec![T::zero(); c];
        for px in input.data().chunks(c) {
            for i in 0..c {
                let d = px[i] - mean[i];
                var[i] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v = *v / m);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + self.epsilon).sqrt()).collect();

        let mut normalized = vec![T::zero(); input.len()];
        let mut out = vec![T::zero(); input.len()];
        for (j, px) in input.data().chunks(c).enumerate() {
            for i in 0..c {
                let xh = (px[i] - mean[i]) * inv_std[i];
                normalized[j * c + i] = xh;
                out[j * c + i] = self.gamma.data()[i] * xh + self.beta.data()[i];
            }
        }

        let keep = self.momentum;
        let blend = T::one() - keep;
        for i in 0..c {
            let rm = &mut self.running_mean.data_mut()[i];
            *rm = keep * *rm + blend * mean[i];
            let rv = &mut self.running_var.data_mut()[i];
            *rv = keep * *rv + blend * var[i];
        }
        Ok((Tensor::from_data(input.shape(), out)?, BatchNormCache { normalized, inv_std }))
    }

    /// Input gradient and `[gamma, beta]` gradients of a training-mode pass.
    pub fn backward(&self, cache: &BatchNormCache<T>, grad_out: &Tensor<T>) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        let c = self.check(grad_out)?;
        if grad_out.len() != cache.normalized.len() {
            return Err(Error::LengthMismatch { expected: cache.normalized.len(), actual: grad_out.len() });
        }
        let m = T::from_f64((grad_out.len() / c) as f64);
        let mut sum_dy = vec![T::zero(); c];
        let mut sum_dy_xh = vec![T::zero(); c];
        for (dy, xh) in grad_out.data().chunks(c).zip(cache.normalized.chunks(c)) {
            for i in 0..c {
                sum_dy[i] += dy[i];
                sum_dy_xh[i] += dy[i] * xh[i];
            }
        }
        let mut dx = vec![T::zero(); grad_out.len()];
        for (j, (dy, xh)) in grad_out.data().chunks(c).zip(cache.normalized.chunks(c)).enumerate() {
            for i in 0..c {
                let k = self.gamma.data()[i] * cache.inv_std[i] / m;
                dx[j * c + i] = k * (m * dy[i] - sum_dy[i] - xh[i] * sum_dy_xh[i]);
            }
        }
        Ok((
            Tensor::from_data(grad_out.shape(), dx)?,
            vec![Tensor::from_data(&[c], sum_dy_xh)?, Tensor::from_data(&[c], sum_dy)?],
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use rand::Rng;

    #[test]
    fn default_statistics_are_identity_at_inference() {
        let bn = BatchNorm::<f64>::new(3).unwrap();
        let x = Tensor::from_data(&[2, 3], vec![0.5, -1.0, 2.0, 3.0, 0.0, -0.25]).unwrap();
        let y = bn.infer(&x).unwrap();
        let scale = 1.0 / (1.0 + BN_EPSILON).sqrt();
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a * scale - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_channel_normalizes_to_zero() {
        let mut bn = BatchNorm::<f32>::new(1).unwrap();
        let x = Tensor::full(&[4, 2, 2, 1], 3.5f32).unwrap();
        let (y, _) = bn.forward_train(&x).unwrap();
        assert!(y.data().iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn batch_output_is_standardized() {
        let mut rng = SeededRng::new(3);
        let x = Tensor::<f64>::from_fn(&[64, 3, 3, 2], |_| rng.random_range(-4.0..9.0)).unwrap();
        let mut bn = BatchNorm::<f64>::new(2).unwrap();
        let (y, _) = bn.forward_train(&x).unwrap();
        for ch in 0..2 {
            let vals: Vec<f64> = y.data().iter().skip(ch).step_by(2).copied().collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-3, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-3, "var {var}");
        }
    }

    #[test]
    fn running_statistics_move_toward_batch() {
        let mut bn = BatchNorm::<f64>::new(1).unwrap();
        let x = Tensor::from_data(&[2, 1], vec![1.0, 3.0]).unwrap();
        bn.forward_train(&x).unwrap();
        assert!((bn.running_mean.data()[0] - 0.02).abs() < 1e-12);
        assert!((bn.running_var.data()[0] - (0.99 + 0.01 * 1.0)).abs() < 1e-12);
    }

    #[test]
    fn rejects_negative_variance() {
        let ones = Tensor::<f32>::full(&[2], 1.0).unwrap();
        let neg = Tensor::from_data(&[2], vec![1.0f32, -0.1]).unwrap();
        assert!(BatchNorm::from_parts(ones.clone(), ones.clone(), ones, neg).is_err());
    }
}
