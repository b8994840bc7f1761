//! Losses, the Adam optimiser, augmentation and the epoch loop.

mod adam;
mod augment;
mod loss;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamConfig};
pub use augment::{augment, AffineTransform, AugmentConfig};
pub use loss::{
    class_weights, cross_entropy_batch, mse_batch, mse_loss, weighted_cross_entropy, BatchLoss, CrossEntropy, PROB_FLOOR,
};

use crate::arch::{Head, Model};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// Supervision for one image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Emotion(usize),
    Affect { valence: f64, arousal: f64 },
}

/// A preprocessed `H×W×3` image in [0, 1] and its label.
#[derive(Clone, Debug)]
pub struct Example {
    pub image: Tensor<f32>,
    pub target: Target,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "weighted-cross-entropy")]
    WeightedCrossEntropy,
    #[serde(rename = "mean-squared-error")]
    MeanSquaredError,
}

impl LossKind {
    pub fn for_head(head: Head) -> Self {
        match head {
            Head::Emotion => LossKind::WeightedCrossEntropy,
            Head::ValenceArousal => LossKind::MeanSquaredError,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: LossKind,
    /// Per-class loss weights; `None` means all ones.
    pub class_weights: Option<Vec<f64>>,
    /// `None` disables augmentation.
    pub augmentation: Option<AugmentConfig>,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl TrainConfig {
    /// Classification runs last 24 epochs, fine-tuning the regression head 16.
    pub fn for_head(head: Head) -> Self {
        Self {
            batch_size: 32,
            epochs: match head {
                Head::Emotion => 24,
                Head::ValenceArousal => 16,
            },
            loss: LossKind::for_head(head),
            class_weights: None,
            augmentation: Some(AugmentConfig::default()),
            seed: 0,
            adam: AdamConfig::default(),
        }
    }

    fn validate(&self, head: Head) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if self.loss != LossKind::for_head(head) {
            return Err(Error::Training(format!("loss {:?} does not match the {head} head", self.loss)));
        }
        if let Some(w) = &self.class_weights {
            if w.len() != head.units() || w.iter().any(|&x| x <= 0.0) {
                return Err(Error::InvalidConfig("class weights must be one positive value per class".into()));
            }
        }
        self.adam.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    /// One JSON object per line.
    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for rec in &self.epochs {
            serde_json::to_writer(&mut out, rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(input: impl BufRead) -> std::io::Result<Self> {
        let mut epochs = Vec::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            epochs.push(serde_json::from_str(&line)?);
        }
        Ok(Self { epochs })
    }
}

fn check_targets(head: Head, set: &[Example]) -> Result<()> {
    for (i, ex) in set.iter().enumerate() {
        let ok = match (head, ex.target) {
            (Head::Emotion, Target::Emotion(c)) => c < head.units(),
            (Head::ValenceArousal, Target::Affect { .. }) => true,
            _ => false,
        };
        if !ok {
            return Err(Error::Training(format!("example {i} has target {:?}, incompatible with the {head} head", ex.target)));
        }
    }
    Ok(())
}

fn batch_loss(model: &Model<f32>, logits: &Tensor<f32>, batch: &[&Example], cfg: &TrainConfig) -> Result<BatchLoss<f32>> {
    match model.head() {
        Head::Emotion => {
            let labels: Vec<usize> = batch
                .iter()
                .map(|e| match e.target {
                    Target::Emotion(c) => c,
                    Target::Affect { .. } => unreachable!("targets checked"),
                })
                .collect();
            cross_entropy_batch(logits, &labels, cfg.class_weights.as_deref())
        }
        Head::ValenceArousal => {
            let targets: Vec<Vec<f64>> = batch
                .iter()
                .map(|e| match e.target {
                    Target::Affect { valence, arousal } => vec![valence, arousal],
                    Target::Emotion(_) => unreachable!("targets checked"),
                })
                .collect();
            mse_batch(logits, &targets)
        }
    }
}

/// Loss and head-appropriate metrics over `set` in inference mode.
pub fn evaluate(model: &Model<f32>, set: &[Example], cfg: &TrainConfig) -> Result<(f64, BTreeMap<String, f64>)> {
    check_targets(model.head(), set)?;
    let mut metrics = BTreeMap::new();
    if set.is_empty() {
        return Ok((f64::NAN, metrics));
    }
    let mut total = 0.0;
    let mut outputs: Vec<Vec<f32>> = Vec::with_capacity(set.len());
    for chunk in set.chunks(cfg.batch_size) {
        let refs: Vec<&Example> = chunk.iter().collect();
        let images: Vec<&Tensor<f32>> = chunk.iter().map(|e| &e.image).collect();
        let logits = model.infer_logits(&Tensor::stack(&images)?)?;
        total += batch_loss(model, &logits, &refs, cfg)?.loss * chunk.len() as f64;
        let k = logits.shape()[1];
        outputs.extend(logits.data().chunks(k).map(<[f32]>::to_vec));
    }
    match model.head() {
        Head::Emotion => {
            let correct = set
                .iter()
                .zip(&outputs)
                .filter(|(e, out)| {
                    let pred = Tensor::from_data(&[out.len()], out.to_vec()).expect("non-empty").argmax_rows()[0];
                    matches!(e.target, Target::Emotion(c) if c == pred)
                })
                .count();
            metrics.insert("accuracy".into(), correct as f64 / set.len() as f64);
        }
        Head::ValenceArousal => {
            for (dim, name) in [(0, "valence"), (1, "arousal")] {
                let pred: Vec<f64> = outputs.iter().map(|o| o[dim] as f64).collect();
                let truth: Vec<f64> = set
                    .iter()
                    .map(|e| match e.target {
                        Target::Affect { valence, arousal } => [valence, arousal][dim],
                        Target::Emotion(_) => unreachable!("targets checked"),
                    })
                    .collect();
                metrics.insert(format!("rmse_{name}"), crate::metrics::rmse(&pred, &truth).map_err(|e| Error::Training(e.to_string()))?);
            }
        }
    }
    Ok((total / set.len() as f64, metrics))
}

pub fn train(model: &mut Model<f32>, train_set: &[Example], val_set: &[Example], cfg: &TrainConfig) -> Result<TrainLog> {
    train_with_callback(model, train_set, val_set, cfg, |_| {})
}

/// Runs `cfg.epochs` epochs of mini-batch Adam. Each epoch reshuffles the
/// training set; augmentation and dropout apply to training batches only.
/// Everything random derives from `cfg.seed`, so equal inputs give
/// bit-identical logs and weights.
pub fn train_with_callback(
    model: &mut Model<f32>,
    train_set: &[Example],
    val_set: &[Example],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainLog> {
    let head = model.head();
    cfg.validate(head)?;
    if train_set.is_empty() {
        return Err(Error::Training("training set is empty".into()));
    }
    check_targets(head, train_set)?;
    check_targets(head, val_set)?;

    let mut rng = SeededRng::new(cfg.seed);
    let mut adam = Adam::new(cfg.adam, &model.trainable())?;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = TrainLog::default();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = idx.iter().map(|&i| &train_set[i]).collect();
            let images = batch
                .iter()
                .map(|e| match &cfg.augmentation {
                    Some(aug) => augment(&e.image, &mut rng, aug),
                    None => Ok(e.image.clone()),
                })
                .collect::<Result<Vec<_>>>()?;
            let inputs = Tensor::stack(&images.iter().collect::<Vec<_>>())?;
            let (logits, contexts) = model.forward(&inputs, true, &mut rng)?;
            let loss = batch_loss(model, &logits, &batch, cfg)?;
            let grads = model.backward(&contexts, &loss.grad)?;
            adam.step(model.trainable_mut(), &grads)?;
            total += loss.loss * batch.len() as f64;
        }
        let (val_loss, metrics) = if val_set.is_empty() {
            (None, BTreeMap::new())
        } else {
            let (l, m) = evaluate(model, val_set, cfg)?;
            (Some(l), m)
        };
        let record = EpochRecord { epoch, train_loss: total / train_set.len() as f64, val_loss, metrics };
        on_epoch(&record);
        log.epochs.push(record);
    }
    Ok(log)
}
