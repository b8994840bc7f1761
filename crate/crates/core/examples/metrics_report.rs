//! Scores a confusion matrix and a handful of regression predictions.
//!
//! cargo run --example metrics_report

use mobile_affect::metrics::{ClassificationReport, RegressionReport};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Three classes; per-sample scores put most mass on the predicted class.
    let pairs = [(0, 0), (0, 0), (0, 1), (1, 1), (1, 1), (1, 2), (2, 2), (2, 2), (2, 0), (1, 1)];
    let truth: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let scores: Vec<Vec<f64>> = pairs
        .iter()
        .map(|&(_, p)| (0..3).map(|c| if c == p { 0.7 } else { 0.15 }).collect())
        .collect();
    let report = ClassificationReport::compute(&truth, &scores)?;
    print!("{}", report.to_text());
    println!("confusion: {:?}\n", report.confusion.counts());

    let truth = [[0.6, 0.1], [-0.3, 0.4], [0.1, -0.5], [-0.8, 0.2], [0.4, 0.6]];
    let pred = [[0.5, 0.2], [-0.1, 0.3], [0.2, -0.2], [-0.5, 0.1], [0.3, 0.4]];
    print!("{}", RegressionReport::compute(&pred, &truth)?.to_text());
    Ok(())
}
