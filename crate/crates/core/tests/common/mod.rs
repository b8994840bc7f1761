//! Helpers shared by the integration tests: a central-difference gradient
//! oracle, a small graph that trains in seconds, and a synthetic data set.
#![allow(dead_code)]

pub mod oracles;
pub mod gradcheck;
pub mod tables;

use mobile_affect::arch::{Activation, LayerSpec};
use mobile_affect::nn::{Layer, LayerContext};
use mobile_affect::training::{train_with_callback, AdamConfig, Example, Target, TrainConfig, TrainLog};
use mobile_affect::{Head, Model, ModelGraph, SeededRng, Tensor};
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;
/// Denominator floor so that gradients which are both ~0 do not blow up the
/// relative error.
pub const FD_FLOOR: f64 = 1e-3;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

/// Worst relative error between `analytic` and central differences of `f`
/// around `x`, over every coordinate.
pub fn worst_error(x: &[f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    assert_eq!(x.len(), analytic.len());
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        probe[i] = x[i] + FD_STEP;
        let up = f(&probe);
        probe[i] = x[i] - FD_STEP;
        let down = f(&probe);
        probe[i] = x[i];
        worst = worst.max(rel_error(analytic[i], (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

pub fn random_tensor(shape: &[usize], rng: &mut SeededRng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0)).unwrap()
}

/// Result of checking one layer: worst error for the input gradient and for
/// each trainable parameter.
#[derive(Debug)]
pub struct LayerCheck {
    pub input: f64,
    pub params: Vec<f64>,
}

impl LayerCheck {
    pub fn worst(&self) -> f64 {
        self.params.iter().copied().fold(self.input, f64::max)
    }
}

/// Checks `layer` under the scalar loss `Σ forward(x) ⊙ R` for a fixed random
/// `R`. Stochastic layers reuse the same seed on every evaluation so the
/// noise is identical across probes.
pub fn check_layer(layer: &Layer<f64>, input_shape: &[usize], training: bool, seed: u64) -> LayerCheck {
    let mut rng = SeededRng::new(seed);
    let x = random_tensor(input_shape, &mut rng);
    let out_shape = layer.output_shape(&input_shape[1..]).unwrap();
    let mut full_out = vec![input_shape[0]];
    full_out.extend(out_shape);
    let r = random_tensor(&full_out, &mut rng);

    let run = |layer: &Layer<f64>, x: &Tensor<f64>| -> (f64, LayerContext<f64>) {
        let mut l = layer.clone();
        let mut ctx = LayerContext::new(training);
        let y = l.forward(x, &mut ctx, &mut SeededRng::new(seed ^ 0x5eed)).unwrap();
        let loss = y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum();
        (loss, ctx)
    };

    let (_, ctx) = run(layer, &x);
    let (dx, dparams) = layer.backward(&ctx, &r).unwrap();

    let input = worst_error(x.data(), dx.data(), |probe| {
        run(layer, &Tensor::from_data(x.shape(), probe.to_vec()).unwrap()).0
    });
    let params = dparams
        .iter()
        .enumerate()
        .map(|(p, grad)| {
            let base = layer.trainable()[p].clone();
            worst_error(base.data(), grad.data(), |probe| {
                let mut l = layer.clone();
                *l.trainable_mut()[p] = Tensor::from_data(base.shape(), probe.to_vec()).unwrap();
                run(&l, &x).0
            })
        })
        .collect();
    LayerCheck { input, params }
}

/// A graph with one of every block type, sized to train in seconds.
pub fn micro_graph(head: Head, size: usize) -> ModelGraph {
    ModelGraph::custom(
        "micro",
        &[size, size, 3],
        vec![
            LayerSpec::ConvBlock { kernel: 3, filters: 8, stride: 1 },
            LayerSpec::MaxPool,
            LayerSpec::GaussianDropout { rate: 0.1 },
            LayerSpec::SeparableBlock { filters: 12, stride: 2 },
            LayerSpec::GlobalAvgPool,
            LayerSpec::Dense { units: 16, activation: Activation::Relu },
            LayerSpec::Dropout { rate: 0.1 },
        ],
        head,
    )
    .unwrap()
}

/// Bit `c` of the class id sets the level of colour channel `c`, so all
/// eight classes are separable by mean colour and survive flips, rotations
/// and shifts. A little per-pixel texture keeps images distinct.
pub fn colour_dataset(per_class: usize, size: usize, seed: u64) -> Vec<Example> {
    let mut rng = SeededRng::new(seed);
    let mut out = Vec::new();
    for _ in 0..per_class {
        for class in 0..8usize {
            let image = Tensor::from_fn(&[size, size, 3], |i| {
                let c = i % 3;
                let level = if class >> c & 1 == 1 { 0.8 } else { 0.2 };
                (level + rng.random_range(-0.1f32..0.1)).clamp(0.0, 1.0)
            })
            .unwrap();
            out.push(Example { image, target: Target::Emotion(class) });
        }
    }
    out
}

/// The same images with valence/arousal targets derived from the colour bits.
pub fn affect_dataset(per_class: usize, size: usize, seed: u64) -> Vec<Example> {
    colour_dataset(per_class, size, seed)
        .into_iter()
        .map(|mut e| {
            let Target::Emotion(c) = e.target else { unreachable!() };
            let valence = if c & 1 == 1 { 0.6 } else { -0.4 };
            let arousal = if c & 2 == 2 { 0.5 } else { -0.5 };
            e.target = Target::Affect { valence, arousal };
            e
        })
        .collect()
}

pub const TOY_SIZE: usize = 16;
pub const TOY_MAX_EPOCHS: usize = 200;

/// Settings for the desk-scale toy run: 16 images, two batches per epoch.
pub fn toy_config(seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        epochs: TOY_MAX_EPOCHS,
        seed,
        adam: AdamConfig::with_alpha(0.01),
        ..TrainConfig::for_head(Head::Emotion)
    }
}

/// Outcome of a toy run: the trained model, its log and the first epoch at
/// which every training image is classified correctly in inference mode.
pub struct ToyRun {
    pub model: Model<f32>,
    pub log: TrainLog,
    pub solved_at: Option<usize>,
}

pub fn toy_run(seed: u64) -> ToyRun {
    let data = colour_dataset(2, TOY_SIZE, 7);
    let mut model = Model::<f32>::new(micro_graph(Head::Emotion, TOY_SIZE), &mut SeededRng::new(seed)).unwrap();
    let mut solved_at = None;
    let log = train_with_callback(&mut model, &data, &data, &toy_config(seed), |r| {
        if solved_at.is_none() && r.metrics["accuracy"] == 1.0 {
            solved_at = Some(r.epoch);
        }
    })
    .unwrap();
    ToyRun { model, log, solved_at }
}

/// Frozen wire form of the request for a happy face at valence 0.5,
/// arousal -0.2 with the bundled genre map.
pub const GOLDEN_REQUEST: &str = include_str!("../fixtures/recommend_request.txt");

pub fn golden_prediction() -> mobile_affect::recommender::AffectPrediction {
    mobile_affect::recommender::AffectPrediction::certain(mobile_affect::data::Emotion::Happy, 0.5, -0.2).unwrap()
}
