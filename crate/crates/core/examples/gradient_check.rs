//! Compares a convolution's analytic gradients with central differences.
//!
//! cargo run --example gradient_check

use mobile_affect::nn::{he_uniform, Conv2d, Layer, LayerContext};
use mobile_affect::{SeededRng, Tensor};
use rand::Rng;

const STEP: f64 = 1e-5;

fn main() -> mobile_affect::Result<()> {
    let mut rng = SeededRng::new(3);
    let weight = he_uniform::<f64>(&[3, 3, 2, 4], 18, &mut rng)?;
    let layer = Layer::Conv2d(Conv2d::new(weight, None, 2)?);
    let x = Tensor::from_fn(&[1, 5, 5, 2], |_| rng.random_range(-1.0..1.0))?;
    let out_shape = [1, 3, 3, 4];
    let r = Tensor::from_fn(&out_shape, |_| rng.random_range(-1.0..1.0))?;

    // Scalar loss Σ y⊙r, so dL/dy = r.
    let loss = |x: &Tensor<f64>| -> mobile_affect::Result<f64> {
        let y = layer.clone().forward(x, &mut LayerContext::new(false), &mut SeededRng::new(0))?;
        Ok(y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum())
    };
    let mut ctx = LayerContext::new(false);
    layer.clone().forward(&x, &mut ctx, &mut SeededRng::new(0))?;
    let (dx, _) = layer.backward(&ctx, &r)?;

    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let shifted = |delta: f64| {
            let mut v = x.data().to_vec();
            v[i] += delta;
            Tensor::from_data(x.shape(), v)
        };
        let numeric = (loss(&shifted(STEP)?)? - loss(&shifted(-STEP)?)?) / (2.0 * STEP);
        let analytic = dx.data()[i];
        worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3));
    }
    println!("input gradient: worst relative error {worst:.2e} over {} coordinates", x.len());
    Ok(())
}
