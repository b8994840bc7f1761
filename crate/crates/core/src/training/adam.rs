use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { alpha: 0.001, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        Self { alpha, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        // A zero step size is allowed: it leaves parameters untouched.
        let ok = self.alpha >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if !ok {
            return Err(Error::InvalidConfig(format!("invalid Adam configuration {self:?}")));
        }
        Ok(())
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    config: AdamConfig,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
    timestep: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &[&Tensor<T>]) -> Result<Self> {
        config.validate()?;
        let zeros = |t: &&Tensor<T>| Tensor::zeros(t.shape());
        Ok(Self {
            config,
            first: params.iter().map(zeros).collect::<Result<_>>()?,
            second: params.iter().map(zeros).collect::<Result<_>>()?,
            timestep: 0,
        })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn timestep(&self) -> u64 {
        self.timestep
    }

    pub fn step(&mut self, params: Vec<&mut Tensor<T>>, grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::LengthMismatch { expected: self.first.len(), actual: grads.len().min(params.len()) });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::ShapeMismatch { op: "adam step", left: p.shape().to_vec(), right: g.shape().to_vec() });
            }
        }
        self.timestep += 1;
        let t = self.timestep as i32;
        let AdamConfig { alpha, beta1, beta2, epsilon } = self.config;
        let correct1 = 1.0 - beta1.powi(t);
        let correct2 = 1.0 - beta2.powi(t);
        let (b1, b2) = (T::from_f64(beta1), T::from_f64(beta2));
        let (c1, c2) = (T::from_f64(correct1), T::from_f64(correct2));
        let (lr, eps) = (T::from_f64(alpha), T::from_f64(epsilon));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
            for i in 0..p.len() {
                let gi = g.data()[i];
                m[i] = b1 * m[i] + one_b1 * gi;
                v[i] = b2 * v[i] + one_b2 * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Tensor::from_data(&[3], vec![0.5f64, -1.0, 2.0]).unwrap();
        let before = p.clone();
        let mut adam = Adam::new(AdamConfig::default(), &[&p]).unwrap();
        for _ in 0..5 {
            adam.step(vec![&mut p], &[Tensor::zeros(&[3]).unwrap()]).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_alpha_against_gradient_sign() {
        let mut p = Tensor::from_data(&[3], vec![0.0f64, 0.0, 0.0]).unwrap();
        let mut adam = Adam::new(AdamConfig::default(), &[&p]).unwrap();
        let g = Tensor::from_data(&[3], vec![3.0, -0.02, 1e-3]).unwrap();
        adam.step(vec![&mut p], &[g]).unwrap();
        // m̂ = g and v̂ = g², so the step is α·g/(|g|+ε).
        for (&x, &gi) in p.data().iter().zip(&[3.0f64, -0.02, 1e-3]) {
            let expected = -0.001 * gi / (gi.abs() + 1e-8);
            assert!((x - expected).abs() < 1e-12, "{x} vs {expected}");
            assert!((x + 0.001 * gi.signum()).abs() < 1e-7);
        }
    }

    #[test]
    fn minimizes_a_quadratic_bowl() {
        let mut x = Tensor::from_data(&[1], vec![1.0f64]).unwrap();
        let mut adam = Adam::new(AdamConfig::with_alpha(0.1), &[&x]).unwrap();
        let mut reached = None;
        for step in 1..=500 {
            let g = x.map(|v| 2.0 * v);
            adam.step(vec![&mut x], &[g]).unwrap();
            if x.data()[0].abs() < 1e-3 && reached.is_none() {
                reached = Some(step);
            }
        }
        assert!(reached.is_some(), "x = {}", x.data()[0]);
        assert!(x.data()[0].powi(2) < 1e-3);
    }

    #[test]
    fn rejects_mismatched_shapes_and_bad_config() {
        let mut p = Tensor::<f32>::zeros(&[2]).unwrap();
        let mut adam = Adam::new(AdamConfig::default(), &[&p]).unwrap();
        assert!(adam.step(vec![&mut p], &[Tensor::zeros(&[3]).unwrap()]).is_err());
        assert!(Adam::<f32>::new(AdamConfig { beta1: 1.0, ..Default::default() }, &[&p]).is_err());
    }
}
