//! Frozen reference values and independent brute-force metric oracles.

use mobile_affect::metrics::{auc_macro, ccc, krippendorff_alpha, pearson, roc_auc, sagr, ConfusionMatrix};
use mobile_affect::SeededRng;
use rand::seq::SliceRandom;
use rand::Rng;

/// Published 8-class confusion matrix, rows true N, H, Sa, Su, Af, D, An, C.
pub const REFERENCE_CONFUSION: [[u64; 8]; 8] = [
    [247, 7, 52, 60, 11, 22, 34, 67],
    [20, 358, 6, 26, 4, 15, 4, 67],
    [63, 9, 279, 22, 38, 41, 37, 11],
    [33, 22, 15, 298, 97, 20, 7, 8],
    [21, 6, 32, 72, 320, 32, 12, 5],
    [29, 9, 36, 24, 31, 316, 42, 13],
    [71, 4, 39, 22, 29, 98, 216, 21],
    [71, 56, 12, 21, 3, 33, 26, 278],
];
pub const REFERENCE_ACC: f64 = 0.578;
pub const REFERENCE_KAPPA: f64 = 0.518;
/// The published figures carry three decimals.
pub const REFERENCE_TOL: f64 = 5e-4;

pub const ALPHA_ORACLE_TOL: f64 = 1e-9;
pub const AUC_ORACLE_TOL: f64 = 1e-12;
pub const CHANCE_AUC_TOL: f64 = 0.03;
pub const CHANCE_KAPPA_TOL: f64 = 0.05;
pub const INVARIANCE_TOL: f64 = 1e-12;

pub fn reference_matrix() -> ConfusionMatrix {
    ConfusionMatrix::from_counts(REFERENCE_CONFUSION.iter().map(|r| r.to_vec()).collect()).unwrap()
}

/// Alpha from its definition: observed disagreement over all within-unit
/// ordered pairs against expected disagreement over all ordered pairs of
/// distinct pooled values.
pub fn brute_alpha(truth: &[usize], pred: &[usize]) -> f64 {
    let within = truth.iter().zip(pred).filter(|(a, b)| a != b).count() as f64 / truth.len() as f64;
    let pooled: Vec<usize> = truth.iter().chain(pred).copied().collect();
    let mut disagree = 0u64;
    for (i, a) in pooled.iter().enumerate() {
        for (j, b) in pooled.iter().enumerate() {
            if i != j && a != b {
                disagree += 1;
            }
        }
    }
    let n = pooled.len() as f64;
    1.0 - within / (disagree as f64 / (n * (n - 1.0)))
}

/// ROC area as the probability that a positive outranks a negative, ties 1/2.
pub fn brute_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (s, p) in scores.iter().zip(positive) {
        for (t, q) in scores.iter().zip(positive) {
            if *p && !*q {
                pairs += 1.0;
                wins += if s > t { 1.0 } else if s == t { 0.5 } else { 0.0 };
            }
        }
    }
    wins / pairs
}

fn labels(rng: &mut SeededRng, n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

fn check(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok { Ok(()) } else { Err(what()) }
}

/// Identical label vectors give kappa = alpha = 1.
pub fn perfect_agreement() -> Result<(), String> {
    let mut rng = SeededRng::new(99);
    for trial in 0..20 {
        let t = labels(&mut rng, 50, 8);
        let kappa = ConfusionMatrix::from_labels(&t, &t, 8).unwrap().cohen_kappa().unwrap().value;
        let alpha = krippendorff_alpha(&t, &t).unwrap();
        check((kappa - 1.0).abs() <= INVARIANCE_TOL && (alpha - 1.0).abs() <= INVARIANCE_TOL, || {
            format!("trial {trial}: kappa {kappa} alpha {alpha}")
        })?;
    }
    Ok(())
}

/// Alpha agrees with the brute-force definition on 100 random label vectors.
pub fn alpha_matches_oracle() -> Result<(), String> {
    let mut rng = SeededRng::new(100);
    for trial in 0..100 {
        let n = rng.random_range(2..60);
        let k = rng.random_range(2..9);
        let (t, p) = (labels(&mut rng, n, k), labels(&mut rng, n, k));
        let (Ok(fast), true) = (krippendorff_alpha(&t, &p), t.iter().chain(&p).any(|&v| v != t[0])) else {
            continue;
        };
        let slow = brute_alpha(&t, &p);
        check((fast - slow).abs() <= ALPHA_ORACLE_TOL, || format!("trial {trial}: {fast} vs {slow}"))?;
    }
    Ok(())
}

/// Binary ROC area agrees with the pairwise definition, ties included.
pub fn auc_matches_oracle() -> Result<(), String> {
    let mut rng = SeededRng::new(101);
    for trial in 0..100 {
        let n = rng.random_range(2..80);
        // Coarse scores force plenty of ties.
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64 / 5.0).collect();
        let positive: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        let Some(fast) = roc_auc(&scores, &positive) else { continue };
        let slow = brute_auc(&scores, &positive);
        check((fast - slow).abs() <= AUC_ORACLE_TOL, || format!("trial {trial}: {fast} vs {slow}"))?;
    }
    Ok(())
}

/// |CCC| never exceeds |CORR|, over 1000 random vector pairs.
pub fn ccc_bounded_by_corr() -> Result<(), String> {
    let mut rng = SeededRng::new(102);
    for trial in 0..1000 {
        let n = rng.random_range(3..40);
        let shift = rng.random_range(-1.0..1.0);
        let scale = rng.random_range(0.1..3.0);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| scale * v + shift + rng.random_range(-0.5..0.5)).collect();
        let (c, r) = (ccc(&x, &y).unwrap(), pearson(&x, &y).unwrap());
        check(c.abs() <= r.abs() + 1e-12, || format!("trial {trial}: ccc {c} corr {r}"))?;
    }
    Ok(())
}

/// Uninformative scores and labels land at chance: AUC near 1/2, kappa near 0.
pub fn chance_level() -> Result<(), String> {
    let mut rng = SeededRng::new(103);
    let n = 4000;
    let truth = labels(&mut rng, n, 8);
    let scores: Vec<Vec<f64>> = (0..n).map(|_| (0..8).map(|_| rng.random::<f64>()).collect()).collect();
    let auc = auc_macro(&truth, &scores).map_err(|e| e.to_string())?.value;
    check((auc - 0.5).abs() <= CHANCE_AUC_TOL, || format!("random AUC {auc}"))?;
    let pred = labels(&mut rng, n, 8);
    let kappa = ConfusionMatrix::from_labels(&truth, &pred, 8).unwrap().cohen_kappa().unwrap().value;
    check(kappa.abs() <= CHANCE_KAPPA_TOL, || format!("random kappa {kappa}"))
}

/// SAGR depends only on signs, so positive rescaling leaves it unchanged.
pub fn sagr_scale_invariant() -> Result<(), String> {
    let mut rng = SeededRng::new(104);
    for trial in 0..200 {
        let n = rng.random_range(1..50);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let k = rng.random_range(0.01..100.0);
        let scaled: Vec<f64> = x.iter().map(|v| v * k).collect();
        let (a, b) = (sagr(&x, &y).unwrap(), sagr(&scaled, &y).unwrap());
        check(a == b, || format!("trial {trial}: {a} vs {b} at scale {k}"))?;
    }
    Ok(())
}

/// Reordering samples changes none of the scores.
pub fn permutation_invariant() -> Result<(), String> {
    let mut rng = SeededRng::new(105);
    for trial in 0..50 {
        let n = rng.random_range(10..60);
        let truth = labels(&mut rng, n, 4);
        let pred = labels(&mut rng, n, 4);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let scores: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let perm = |v: &[usize]| order.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let permf = |v: &[f64]| order.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let perms: Vec<Vec<f64>> = order.iter().map(|&i| scores[i].clone()).collect();

        let pairs = [
            (krippendorff_alpha(&truth, &pred).ok(), krippendorff_alpha(&perm(&truth), &perm(&pred)).ok()),
            (
                ConfusionMatrix::from_labels(&truth, &pred, 4).unwrap().cohen_kappa().ok().map(|k| k.value),
                ConfusionMatrix::from_labels(&perm(&truth), &perm(&pred), 4).unwrap().cohen_kappa().ok().map(|k| k.value),
            ),
            (ccc(&x, &y).ok(), ccc(&permf(&x), &permf(&y)).ok()),
            (pearson(&x, &y).ok(), pearson(&permf(&x), &permf(&y)).ok()),
            (auc_macro(&truth, &scores).ok().map(|m| m.value), auc_macro(&perm(&truth), &perms).ok().map(|m| m.value)),
        ];
        for (i, (a, b)) in pairs.into_iter().enumerate() {
            let same = match (a, b) {
                (Some(a), Some(b)) => (a - b).abs() <= INVARIANCE_TOL,
                (None, None) => true,
                _ => false,
            };
            check(same, || format!("trial {trial} metric {i}: {a:?} vs {b:?}"))?;
        }
    }
    Ok(())
}

pub fn all_properties() -> Vec<(&'static str, Result<(), String>)> {
    vec![
        ("kappa = alpha = 1 on perfect agreement", perfect_agreement()),
        ("alpha vs brute-force oracle", alpha_matches_oracle()),
        ("AUC vs pairwise oracle", auc_matches_oracle()),
        ("|CCC| <= |CORR|", ccc_bounded_by_corr()),
        ("chance-level AUC and kappa", chance_level()),
        ("SAGR scale invariance", sagr_scale_invariant()),
        ("permutation invariance", permutation_invariant()),
    ]
}
