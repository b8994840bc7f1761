//! Inference latency measurement.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::arch::Model;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_RUNS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub latencies_ms: Vec<f64>,
    pub mean_ms: f64,
    /// Frames per second at the mean latency, `1000 / mean_ms`.
    pub fps: f64,
}

impl BenchReport {
    pub fn from_latencies(latencies_ms: Vec<f64>) -> Result<Self> {
        if latencies_ms.is_empty() {
            return Err(Error::InvalidConfig("benchmark needs at least one run".into()));
        }
        if latencies_ms.iter().any(|&l| !l.is_finite() || l <= 0.0) {
            return Err(Error::InvalidConfig("latencies must be positive".into()));
        }
        let mean_ms = latencies_ms.iter().sum::<f64>() / latencies_ms.len() as f64;
        Ok(Self { fps: 1000.0 / mean_ms, mean_ms, latencies_ms })
    }

    pub fn min_ms(&self) -> f64 {
        self.latencies_ms.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_ms(&self) -> f64 {
        self.latencies_ms.iter().copied().fold(0.0, f64::max)
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "runs {}  mean {:.1} ms  min {:.1} ms  max {:.1} ms  {:.1} fps",
            self.latencies_ms.len(),
            self.mean_ms,
            self.min_ms(),
            self.max_ms(),
            self.fps
        )
    }
}

/// Times `runs` single-image inference passes after one untimed warm-up.
/// `input` is an already preprocessed `H×W×C` image, so decoding and
/// resizing stay outside the measurement.
pub fn bench_model(model: &Model<f32>, input: &Tensor<f32>, runs: usize) -> Result<BenchReport> {
    if runs == 0 {
        return Err(Error::InvalidConfig("benchmark needs at least one run".into()));
    }
    let batch = Tensor::stack(&[input])?;
    model.infer_logits(&batch)?;
    let mut latencies = Vec::with_capacity(runs);
    for _ in 0..runs {
        let start = Instant::now();
        let out = model.infer_logits(&batch)?;
        latencies.push(start.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(out);
    }
    BenchReport::from_latencies(latencies)
}
