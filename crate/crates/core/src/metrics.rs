//! Classification and regression evaluation metrics.
//!
//! Everything here is pure and works on plain slices, so the same code scores
//! model output, CLI evaluation runs and fixed reference matrices.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("metric needs at least one sample")]
    Empty,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("{0} is undefined for zero-variance input")]
    ZeroVariance(&'static str),
    #[error("alpha is undefined when only one label value occurs")]
    ZeroExpectedDisagreement,
    #[error("no class has both positive and negative examples")]
    NoScorableClass,
    #[error("score row {row} has {found} entries, expected {expected}")]
    ScoreWidth { row: usize, expected: usize, found: usize },
    #[error("confusion matrix must be square and non-empty")]
    BadMatrix,
}

pub type MetricResult<T> = std::result::Result<T, MetricError>;

fn same_len(a: usize, b: usize) -> MetricResult<()> {
    if a != b {
        return Err(MetricError::LengthMismatch { left: a, right: b });
    }
    if a == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> MetricResult<Self> {
        let k = counts.len();
        if k == 0 || counts.iter().any(|r| r.len() != k) {
            return Err(MetricError::BadMatrix);
        }
        Ok(Self { counts })
    }

    pub fn from_labels(truth: &[usize], pred: &[usize], classes: usize) -> MetricResult<Self> {
        same_len(truth.len(), pred.len())?;
        if classes == 0 {
            return Err(MetricError::BadMatrix);
        }
        let mut counts = vec![vec![0u64; classes]; classes];
        for (&t, &p) in truth.iter().zip(pred) {
            for label in [t, p] {
                if label >= classes {
                    return Err(MetricError::LabelOutOfRange { label, classes });
                }
            }
            counts[t][p] += 1;
        }
        Ok(Self { counts })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth][pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.classes()).map(|j| self.counts.iter().map(|r| r[j]).sum()).collect()
    }

    pub fn accuracy(&self) -> MetricResult<f64> {
        match self.total() {
            0 => Err(MetricError::Empty),
            n => Ok(self.trace() as f64 / n as f64),
        }
    }

    /// Unweighted mean of per-class F1. A class that is never predicted and
    /// never present scores 0.
    pub fn macro_f1(&self) -> MetricResult<f64> {
        if self.total() == 0 {
            return Err(MetricError::Empty);
        }
        let (rows, cols) = (self.row_sums(), self.col_sums());
        let sum: f64 = (0..self.classes())
            .map(|c| {
                let tp = self.counts[c][c] as f64;
                let denom = (rows[c] + cols[c]) as f64;
                if denom == 0.0 { 0.0 } else { 2.0 * tp / denom }
            })
            .sum();
        Ok(sum / self.classes() as f64)
    }

    /// Cohen's kappa with chance agreement from the row and column marginals.
    pub fn cohen_kappa(&self) -> MetricResult<Kappa> {
        let n = self.total();
        if n == 0 {
            return Err(MetricError::Empty);
        }
        let n = n as f64;
        let p_o = self.trace() as f64 / n;
        let p_e: f64 = self.row_sums().iter().zip(self.col_sums()).map(|(&r, c)| r as f64 * c as f64).sum::<f64>() / (n * n);
        if (1.0 - p_e).abs() < 1e-15 {
            return Ok(Kappa { value: 0.0, degenerate: true });
        }
        Ok(Kappa { value: (p_o - p_e) / (1.0 - p_e), degenerate: false })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub value: f64,
    /// Chance agreement was 1, so kappa was defined as 0.
    pub degenerate: bool,
}

/// Krippendorff's alpha for nominal labels with two raters per item, computed
/// from the coincidence matrix.
pub fn krippendorff_alpha(truth: &[usize], pred: &[usize]) -> MetricResult<f64> {
    same_len(truth.len(), pred.len())?;
    let k = truth.iter().chain(pred).max().map_or(0, |m| m + 1);
    let mut coincidence = vec![vec![0.0f64; k]; k];
    for (&a, &b) in truth.iter().zip(pred) {
        // Each unit holds two values, so every ordered pair is weighted 1/(2-1).
        coincidence[a][b] += 1.0;
        coincidence[b][a] += 1.0;
    }
    let marginals: Vec<f64> = coincidence.iter().map(|r| r.iter().sum()).collect();
    let n: f64 = marginals.iter().sum();
    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..k {
        for j in 0..k {
            if c != j {
                observed += coincidence[c][j];
                expected += marginals[c] * marginals[j];
            }
        }
    }
    if expected == 0.0 {
        return Err(MetricError::ZeroExpectedDisagreement);
    }
    Ok(1.0 - (n - 1.0) * observed / expected)
}

/// A macro average with the classes left out of it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroScore {
    pub value: f64,
    /// Classes without both positive and negative examples.
    pub skipped: Vec<usize>,
}

/// Groups `(score, is_positive)` pairs by descending score, yielding
/// cumulative (true positives, false positives) after each tie group.
fn tie_groups(scores: &[f64], positive: &[bool]) -> Vec<(f64, f64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        out.push((tp, fp));
    }
    out
}

/// Binary ROC area by the trapezoid rule; tied scores form one diagonal step.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let p = positive.iter().filter(|&&x| x).count() as f64;
    let n = positive.len() as f64 - p;
    if scores.len() != positive.len() || p == 0.0 || n == 0.0 {
        return None;
    }
    let mut area = 0.0;
    let (mut prev_tpr, mut prev_fpr) = (0.0, 0.0);
    for (tp, fp) in tie_groups(scores, positive) {
        let (tpr, fpr) = (tp / p, fp / n);
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        (prev_tpr, prev_fpr) = (tpr, fpr);
    }
    Some(area)
}

/// Binary precision-recall area with step interpolation (average precision).
pub fn average_precision(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let p = positive.iter().filter(|&&x| x).count() as f64;
    if scores.len() != positive.len() || p == 0.0 {
        return None;
    }
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for (tp, fp) in tie_groups(scores, positive) {
        let recall = tp / p;
        area += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
    }
    Some(area)
}

fn one_vs_rest(
    truth: &[usize],
    scores: &[Vec<f64>],
    binary: fn(&[f64], &[bool]) -> Option<f64>,
) -> MetricResult<MacroScore> {
    same_len(truth.len(), scores.len())?;
    let k = scores[0].len();
    for (row, s) in scores.iter().enumerate() {
        if s.len() != k {
            return Err(MetricError::ScoreWidth { row, expected: k, found: s.len() });
        }
    }
    if let Some(&label) = truth.iter().find(|&&t| t >= k) {
        return Err(MetricError::LabelOutOfRange { label, classes: k });
    }
    let (mut sum, mut used, mut skipped) = (0.0, 0usize, Vec::new());
    for c in 0..k {
        let col: Vec<f64> = scores.iter().map(|s| s[c]).collect();
        let positive: Vec<bool> = truth.iter().map(|&t| t == c).collect();
        let both = positive.iter().any(|&x| x) && positive.iter().any(|&x| !x);
        match binary(&col, &positive).filter(|_| both) {
            Some(v) => {
                sum += v;
                used += 1;
            }
            None => skipped.push(c),
        }
    }
    if used == 0 {
        return Err(MetricError::NoScorableClass);
    }
    Ok(MacroScore { value: sum / used as f64, skipped })
}

/// One-vs-rest ROC AUC, unweighted over the classes that can be scored.
pub fn auc_macro(truth: &[usize], scores: &[Vec<f64>]) -> MetricResult<MacroScore> {
    one_vs_rest(truth, scores, roc_auc)
}

/// One-vs-rest precision-recall AUC, unweighted over scorable classes.
pub fn aucpr_macro(truth: &[usize], scores: &[Vec<f64>]) -> MetricResult<MacroScore> {
    one_vs_rest(truth, scores, average_precision)
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population variance.
fn variance(x: &[f64], mu: f64) -> f64 {
    x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / x.len() as f64
}

fn covariance(x: &[f64], mx: f64, y: &[f64], my: f64) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / x.len() as f64
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> MetricResult<f64> {
    same_len(pred.len(), truth.len())?;
    Ok((pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64).sqrt())
}

pub fn pearson(pred: &[f64], truth: &[f64]) -> MetricResult<f64> {
    same_len(pred.len(), truth.len())?;
    let (mp, mt) = (mean(pred), mean(truth));
    let (vp, vt) = (variance(pred, mp), variance(truth, mt));
    if vp == 0.0 || vt == 0.0 {
        return Err(MetricError::ZeroVariance("pearson correlation"));
    }
    Ok((covariance(pred, mp, truth, mt) / (vp * vt).sqrt()).clamp(-1.0, 1.0))
}

/// Fraction of predictions whose sign matches the truth; zero counts as positive.
pub fn sagr(pred: &[f64], truth: &[f64]) -> MetricResult<f64> {
    same_len(pred.len(), truth.len())?;
    let agree = pred.iter().zip(truth).filter(|(p, t)| (**p >= 0.0) == (**t >= 0.0)).count();
    Ok(agree as f64 / pred.len() as f64)
}

/// Concordance correlation coefficient with population variances.
pub fn ccc(pred: &[f64], truth: &[f64]) -> MetricResult<f64> {
    same_len(pred.len(), truth.len())?;
    let (mp, mt) = (mean(pred), mean(truth));
    let (vp, vt) = (variance(pred, mp), variance(truth, mt));
    if vp == 0.0 || vt == 0.0 {
        return Err(MetricError::ZeroVariance("concordance correlation"));
    }
    Ok(2.0 * covariance(pred, mp, truth, mt) / (vp + vt + (mp - mt).powi(2)))
}

/// Scores for emotion classification, rows in the conventional reporting order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub acc: f64,
    pub f1: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub aucpr: f64,
    pub auc: f64,
    pub samples: u64,
    pub confusion: ConfusionMatrix,
    /// Quirks worth surfacing (degenerate kappa, skipped AUC classes, ...).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ClassificationReport {
    /// `scores` holds one probability row per sample; the prediction is its argmax.
    pub fn compute(truth: &[usize], scores: &[Vec<f64>]) -> MetricResult<Self> {
        same_len(truth.len(), scores.len())?;
        let k = scores[0].len();
        let pred: Vec<usize> = scores
            .iter()
            .map(|s| s.iter().enumerate().fold(0, |best, (i, &v)| if v > s[best] { i } else { best }))
            .collect();
        let cm = ConfusionMatrix::from_labels(truth, &pred, k)?;
        let mut warnings = Vec::new();
        let kappa = cm.cohen_kappa()?;
        if kappa.degenerate {
            warnings.push("chance agreement is 1; kappa reported as 0".to_string());
        }
        let alpha = match krippendorff_alpha(truth, &pred) {
            Ok(a) => a,
            Err(e) => {
                warnings.push(format!("{e}; alpha reported as 0"));
                0.0
            }
        };
        let (auc, aucpr) = match (auc_macro(truth, scores), aucpr_macro(truth, scores)) {
            (Ok(auc), Ok(pr)) => {
                if !auc.skipped.is_empty() {
                    warnings.push(format!("classes {:?} skipped in AUC averages", auc.skipped));
                }
                (auc.value, pr.value)
            }
            (Err(e), _) | (_, Err(e)) => {
                warnings.push(format!("{e}; AUC values reported as NaN"));
                (f64::NAN, f64::NAN)
            }
        };
        Ok(Self {
            acc: cm.accuracy()?,
            f1: cm.macro_f1()?,
            kappa: kappa.value,
            alpha,
            aucpr,
            auc,
            samples: cm.total(),
            confusion: cm,
            warnings,
        })
    }

    pub fn rows(&self) -> [(&'static str, f64); 6] {
        [
            ("ACC", self.acc),
            ("F1", self.f1),
            ("KAPPA", self.kappa),
            ("ALPHA", self.alpha),
            ("AUCPR", self.aucpr),
            ("AUC", self.auc),
        ]
    }

    /// `KEY value` lines, two decimals, then any warnings as comments.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, value) in self.rows() {
            let _ = writeln!(out, "{key:<6} {value:.2}");
        }
        for w in &self.warnings {
            let _ = writeln!(out, "# {w}");
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionMetrics {
    pub rmse: f64,
    pub corr: f64,
    pub sagr: f64,
    pub ccc: f64,
}

impl DimensionMetrics {
    pub fn compute(pred: &[f64], truth: &[f64]) -> MetricResult<Self> {
        Ok(Self { rmse: rmse(pred, truth)?, corr: pearson(pred, truth)?, sagr: sagr(pred, truth)?, ccc: ccc(pred, truth)? })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub valence: DimensionMetrics,
    pub arousal: DimensionMetrics,
}

impl RegressionReport {
    /// Inputs are `[valence, arousal]` pairs.
    pub fn compute(pred: &[[f64; 2]], truth: &[[f64; 2]]) -> MetricResult<Self> {
        same_len(pred.len(), truth.len())?;
        let column = |rows: &[[f64; 2]], d: usize| rows.iter().map(|r| r[d]).collect::<Vec<_>>();
        Ok(Self {
            valence: DimensionMetrics::compute(&column(pred, 0), &column(truth, 0))?,
            arousal: DimensionMetrics::compute(&column(pred, 1), &column(truth, 1))?,
        })
    }

    pub fn to_text(&self) -> String {
        let (v, a) = (&self.valence, &self.arousal);
        let mut out = format!("{:<6} {:>8} {:>8}\n", "", "Valence", "Arousal");
        for (key, x, y) in [("RMSE", v.rmse, a.rmse), ("CORR", v.corr, a.corr), ("SAGR", v.sagr, a.sagr), ("CCC", v.ccc, a.ccc)] {
            let _ = writeln!(out, "{key:<6} {x:>8.2} {y:>8.2}");
        }
        out
    }
}
