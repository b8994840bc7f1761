//! Scoring a model on a labelled set.

use serde::Serialize;

use crate::arch::{Head, Model};
use crate::error::{Error, Result};
use crate::metrics::{ClassificationReport, RegressionReport};
use crate::tensor::Tensor;
use crate::training::{Example, Target};

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum EvalReport {
    Classification(ClassificationReport),
    Regression(RegressionReport),
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        match self {
            EvalReport::Classification(r) => r.to_text(),
            EvalReport::Regression(r) => r.to_text(),
        }
    }
}

/// Inference-mode outputs (probabilities for the emotion head) per example.
pub fn predict_all(model: &Model<f32>, examples: &[Example], batch_size: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(batch_size.max(1)) {
        let images: Vec<&Tensor<f32>> = chunk.iter().map(|e| &e.image).collect();
        let pred = model.predict(&Tensor::stack(&images)?)?;
        let k = pred.shape()[1];
        out.extend(pred.data().chunks(k).map(|row| row.iter().map(|&v| v as f64).collect::<Vec<_>>()));
    }
    Ok(out)
}

pub fn evaluate(model: &Model<f32>, examples: &[Example], batch_size: usize) -> Result<EvalReport> {
    if examples.is_empty() {
        return Err(Error::Training("nothing to evaluate".into()));
    }
    let outputs = predict_all(model, examples, batch_size)?;
    let metric_err = |e: crate::metrics::MetricError| Error::Training(e.to_string());
    match model.head() {
        Head::Emotion => {
            let truth = examples
                .iter()
                .map(|e| match e.target {
                    Target::Emotion(c) => Ok(c),
                    other => Err(Error::Training(format!("target {other:?} on an emotion model"))),
                })
                .collect::<Result<Vec<_>>>()?;
            ClassificationReport::compute(&truth, &outputs).map(EvalReport::Classification).map_err(metric_err)
        }
        Head::ValenceArousal => {
            let truth = examples
                .iter()
                .map(|e| match e.target {
                    Target::Affect { valence, arousal } => Ok([valence, arousal]),
                    other => Err(Error::Training(format!("target {other:?} on a va model"))),
                })
                .collect::<Result<Vec<_>>>()?;
            let pred: Vec<[f64; 2]> = outputs.iter().map(|o| [o[0], o[1]]).collect();
            RegressionReport::compute(&pred, &truth).map(EvalReport::Regression).map_err(metric_err)
        }
    }
}
