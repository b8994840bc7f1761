//! Trains a tiny network on a synthetic 8-class colour data set, then swaps
//! the head and fine-tunes it for valence/arousal.
//!
//! cargo run --release --example toy_training

use mobile_affect::arch::{Activation, LayerSpec};
use mobile_affect::training::{self, AdamConfig, Example, Target, TrainConfig};
use mobile_affect::{Head, Model, ModelGraph, SeededRng, Tensor};
use rand::Rng;

const SIZE: usize = 16;

fn graph(head: Head) -> mobile_affect::Result<ModelGraph> {
    ModelGraph::custom(
        "toy",
        &[SIZE, SIZE, 3],
        vec![
            LayerSpec::ConvBlock { kernel: 3, filters: 8, stride: 1 },
            LayerSpec::MaxPool,
            LayerSpec::SeparableBlock { filters: 12, stride: 2 },
            LayerSpec::GlobalAvgPool,
            LayerSpec::Dense { units: 16, activation: Activation::Relu },
        ],
        head,
    )
}

/// Class bit `c` switches colour channel `c` between a dark and a bright level.
fn dataset(per_class: usize, rng: &mut SeededRng) -> mobile_affect::Result<Vec<Example>> {
    let mut out = Vec::new();
    for _ in 0..per_class {
        for class in 0..8usize {
            let image = Tensor::from_fn(&[SIZE, SIZE, 3], |i| {
                let level = if class >> (i % 3) & 1 == 1 { 0.8 } else { 0.2 };
                level + rng.random_range(-0.1f32..0.1)
            })?;
            out.push(Example { image, target: Target::Emotion(class) });
        }
    }
    Ok(out)
}

fn main() -> mobile_affect::Result<()> {
    let mut rng = SeededRng::new(7);
    let data = dataset(2, &mut rng)?;
    let mut model = Model::new(graph(Head::Emotion)?, &mut rng)?;
    let cfg = TrainConfig { batch_size: 8, epochs: 120, seed: 1, adam: AdamConfig::with_alpha(0.01), ..TrainConfig::for_head(Head::Emotion) };
    let log = training::train_with_callback(&mut model, &data, &data, &cfg, |r| {
        if r.epoch % 20 == 0 {
            println!("epoch {:>3}  loss {:.4}  accuracy {:.3}", r.epoch, r.train_loss, r.metrics["accuracy"]);
        }
    })?;
    let solved = log.epochs.iter().find(|r| r.metrics["accuracy"] == 1.0).map(|r| r.epoch);
    println!("first epoch at 100%: {solved:?}");

    let mut va = model.swap_head(Head::ValenceArousal, &mut rng)?;
    let affect: Vec<Example> = data
        .iter()
        .map(|e| {
            let Target::Emotion(c) = e.target else { unreachable!() };
            let target = Target::Affect { valence: if c & 1 == 1 { 0.6 } else { -0.4 }, arousal: if c & 2 == 2 { 0.5 } else { -0.5 } };
            Example { image: e.image.clone(), target }
        })
        .collect();
    let cfg = TrainConfig { batch_size: 8, epochs: 30, adam: AdamConfig::with_alpha(0.01), ..TrainConfig::for_head(Head::ValenceArousal) };
    let log = training::train(&mut va, &affect, &affect, &cfg)?;
    let last = log.epochs.last().expect("30 epochs");
    println!("fine-tuned: rmse valence {:.3}, arousal {:.3}", last.metrics["rmse_valence"], last.metrics["rmse_arousal"]);
    Ok(())
}
