//! Parameter-free layers: activations, pooling, flattening and dropout.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{Scalar, Tensor};

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|x| if x > T::zero() { x } else { T::zero() })
}

pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    input.zip(grad_out, |x, g| if x > T::zero() { g } else { T::zero() })
}

/// Softmax over the trailing axis, computed with max-subtraction.
pub fn softmax<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let width = *input.shape().last().expect("rank >= 1");
    let mut out = input.clone();
    for row in out.data_mut().chunks_mut(width) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v = *v / total;
        }
    }
    out
}

/// Vector-Jacobian product of softmax given its output.
pub fn softmax_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if output.shape() != grad_out.shape() {
        return Err(Error::ShapeMismatch { op: "softmax backward", left: output.shape().to_vec(), right: grad_out.shape().to_vec() });
    }
    let width = *output.shape().last().expect("rank >= 1");
    let mut dx = grad_out.clone();
    for (d, y) in dx.data_mut().chunks_mut(width).zip(output.data().chunks(width)) {
        let dot: T = d.iter().zip(y).map(|(&a, &b)| a * b).sum();
        for (g, &p) in d.iter_mut().zip(y) {
            *g = p * (*g - dot);
        }
    }
    Ok(dx)
}

/// 2×2 max pooling with stride 2. Returns the pooled batch and, for every
/// output element, the flat input index that produced it. Ties resolve to
/// the first element in row-major order within the window.
pub fn maxpool2<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let s = input.shape();
    if s.len() != 4 {
        return Err(Error::ShapeMismatch { op: "maxpool", left: s.to_vec(), right: vec![] });
    }
    let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::InvalidConfig(format!("max pooling needs even spatial dims, got {h}x{w}")));
    }
    let (ho, wo) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(n * ho * wo * c);
    let mut argmax = Vec::with_capacity(n * ho * wo * c);
    for b in 0..n {
        for oy in 0..ho {
            for ox in 0..wo {
                for ch in 0..c {
                    let mut best = ((b * h + 2 * oy) * w + 2 * ox) * c + ch;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = ((b * h + 2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                    out.push(x[best]);
                    argmax.push(best);
                }
            }
        }
    }
    Ok((Tensor::from_data(&[n, ho, wo, c], out)?, argmax))
}

pub fn maxpool2_backward<T: Scalar>(input_shape: &[usize], argmax: &[usize], grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if argmax.len() != grad_out.len() {
        return Err(Error::LengthMismatch { expected: argmax.len(), actual: grad_out.len() });
    }
    let mut dx = Tensor::zeros(input_shape)?;
    let d = dx.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        d[idx] += g;
    }
    Ok(dx)
}

/// `[n, h, w, c] -> [n, c]` spatial mean.
pub fn global_average_pool<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let s = input.shape();
    if s.len() != 4 {
        return Err(Error::ShapeMismatch { op: "global average pool", left: s.to_vec(), right: vec![] });
    }
    let (n, area, c) = (s[0], s[1] * s[2], s[3]);
    let scale = T::one() / T::from_f64(area as f64);
    let mut out = vec![T::zero(); n * c];
    for (b, sample) in input.data().chunks(area * c).enumerate() {
        let acc = &mut out[b * c..][..c];
        for px in sample.chunks(c) {
            for (a, &v) in acc.iter_mut().zip(px) {
                *a += v;
            }
        }
        acc.iter_mut().for_each(|a| *a *= scale);
    }
    Tensor::from_data(&[n, c], out)
}

pub fn global_average_pool_backward<T: Scalar>(input_shape: &[usize], grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, area, c) = (input_shape[0], input_shape[1] * input_shape[2], input_shape[3]);
    if grad_out.shape() != [n, c] {
        return Err(Error::ShapeMismatch { op: "global average pool backward", left: grad_out.shape().to_vec(), right: vec![n, c] });
    }
    let scale = T::one() / T::from_f64(area as f64);
    let mut dx = Vec::with_capacity(n * area * c);
    for g in grad_out.data().chunks(c) {
        for _ in 0..area {
            dx.extend(g.iter().map(|&v| v * scale));
        }
    }
    Tensor::from_data(input_shape, dx)
}

pub fn flatten<T: Scalar>(input: Tensor<T>) -> Result<Tensor<T>> {
    let n = input.shape()[0];
    let rest = input.len() / n;
    input.reshape(&[n, rest])
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidConfig(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    Ok(())
}

/// Inverted dropout multipliers: 0 with probability `rate`, `1/(1-rate)` otherwise.
pub fn dropout_mask<T: Scalar>(len: usize, rate: f64, rng: &mut SeededRng) -> Result<Vec<T>> {
    check_rate(rate)?;
    let keep = T::from_f64(1.0 / (1.0 - rate));
    Ok((0..len).map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep }).collect())
}

/// Multiplicative Gaussian noise with mean 1 and variance `rate/(1-rate)`.
pub fn gaussian_noise<T: Scalar>(len: usize, rate: f64, rng: &mut SeededRng) -> Result<Vec<T>> {
    check_rate(rate)?;
    let std = (rate / (1.0 - rate)).sqrt();
    let normal = Normal::new(1.0, std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok((0..len).map(|_| T::from_f64(normal.sample(rng))).collect())
}

pub fn apply_multipliers<T: Scalar>(input: &Tensor<T>, multipliers: &[T]) -> Result<Tensor<T>> {
    if multipliers.len() != input.len() {
        return Err(Error::LengthMismatch { expected: input.len(), actual: multipliers.len() });
    }
    let mut out = input.clone();
    for (v, &m) in out.data_mut().iter_mut().zip(multipliers) {
        *v *= m;
    }
    Ok(out)
}

/// Training-mode dropout, or the identity when `training` is false.
pub fn dropout<T: Scalar>(input: &Tensor<T>, rate: f64, training: bool, rng: &mut SeededRng) -> Result<Tensor<T>> {
    check_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok(input.clone());
    }
    apply_multipliers(input, &dropout_mask(input.len(), rate, rng)?)
}

pub fn gaussian_dropout<T: Scalar>(input: &Tensor<T>, rate: f64, training: bool, rng: &mut SeededRng) -> Result<Tensor<T>> {
    check_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok(input.clone());
    }
    apply_multipliers(input, &gaussian_noise(input.len(), rate, rng)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_and_softmax_basics() {
        let x = Tensor::from_data(&[2], vec![-1.0f32, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 2.0]);
        let s = softmax(&Tensor::from_data(&[2], vec![0.0f64, 0.0]).unwrap());
        assert_eq!(s.data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_is_shift_invariant_and_normalized() {
        let x = Tensor::from_data(&[1, 4], vec![0.3f64, -1.2, 2.5, 0.9]).unwrap();
        let a = softmax(&x);
        let b = softmax(&x.map(|v| v + 100.0));
        assert_eq!(a.argmax_rows(), b.argmax_rows());
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-12);
            assert!(*p > 0.0 && *p < 1.0);
        }
        assert!((a.sum() - 1.0).abs() < 1e-12);
        // Large logits must not overflow.
        let big = softmax(&Tensor::from_data(&[2], vec![1000.0f32, 999.0]).unwrap());
        assert!(big.all_finite());
    }

    #[test]
    fn maxpool_picks_window_max() {
        let x = Tensor::from_data(&[1, 2, 2, 1], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let (y, idx) = maxpool2(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(idx, vec![3]);
        let odd = Tensor::<f32>::zeros(&[1, 3, 2, 1]).unwrap();
        assert!(maxpool2(&odd).is_err());
    }

    #[test]
    fn maxpool_ties_route_to_first() {
        let x = Tensor::from_data(&[1, 2, 2, 1], vec![5.0f32, 5.0, 5.0, 5.0]).unwrap();
        let (_, idx) = maxpool2(&x).unwrap();
        let g = maxpool2_backward(x.shape(), &idx, &Tensor::from_data(&[1, 1, 1, 1], vec![1.0f32]).unwrap()).unwrap();
        assert_eq!(g.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn maxpool_halves_spatial_dims() {
        let x = Tensor::<f32>::zeros(&[1, 128, 128, 16]).unwrap();
        assert_eq!(maxpool2(&x).unwrap().0.shape(), &[1, 64, 64, 16]);
    }

    #[test]
    fn global_pool_of_constant_plane() {
        let x = Tensor::full(&[1, 4, 4, 3], 0.75f64).unwrap();
        let y = global_average_pool(&x).unwrap();
        assert_eq!(y.data(), &[0.75; 3]);
        let wide = Tensor::<f32>::zeros(&[1, 4, 4, 1024]).unwrap();
        assert_eq!(global_average_pool(&wide).unwrap().shape(), &[1, 1024]);
    }

    #[test]
    fn global_pool_matches_reduce_mean() {
        let x = Tensor::from_fn(&[2, 3, 5, 4], |i| ((i * 37) % 11) as f64 * 0.1).unwrap();
        let y = global_average_pool(&x).unwrap();
        let summed = x.reduce(1, 0.0, |a, b| a + b).unwrap().reduce(1, 0.0, |a, b| a + b).unwrap();
        for (a, b) in y.data().iter().zip(summed.data()) {
            assert!((a - b / 15.0).abs() < 1e-6);
        }
    }

    #[test]
    fn dropout_is_identity_outside_training_or_at_zero_rate() {
        let mut rng = SeededRng::new(1);
        let x = Tensor::from_fn(&[10, 10], |i| i as f32).unwrap();
        assert_eq!(dropout(&x, 0.7, false, &mut rng).unwrap(), x);
        assert_eq!(gaussian_dropout(&x, 0.2, false, &mut rng).unwrap(), x);
        assert_eq!(dropout(&x, 0.0, true, &mut rng).unwrap(), x);
        assert_eq!(gaussian_dropout(&x, 0.0, true, &mut rng).unwrap(), x);
        assert!(dropout(&x, 1.0, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_keep_fraction_and_mean() {
        let mut rng = SeededRng::new(2024);
        let x = Tensor::full(&[100_000], 1.0f64).unwrap();
        let y = dropout(&x, 0.5, true, &mut rng).unwrap();
        let kept = y.data().iter().filter(|&&v| v != 0.0).count() as f64 / 1e5;
        assert!((kept - 0.5).abs() < 0.01, "keep fraction {kept}");
        let mean = y.sum() / 1e5;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn gaussian_noise_moments() {
        let mut rng = SeededRng::new(77);
        let noise: Vec<f64> = gaussian_noise(200_000, 0.2, &mut rng).unwrap();
        let mean = noise.iter().sum::<f64>() / noise.len() as f64;
        let var = noise.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / noise.len() as f64;
        assert!((mean - 1.0).abs() < 0.01);
        assert!((var - 0.25).abs() < 0.01, "variance {var}");
    }
}
