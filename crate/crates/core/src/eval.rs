//! ROC/AUC and stratified k-fold cross-validation.

use crate::glm::{backward_eliminate, fit_logistic, FitOptions, GlmError, LogisticModel};
use crate::preprocess::FeatureMatrix;
use crate::rng::Xoshiro256;
use rayon::prelude::*;
use std::cmp::Ordering;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("AUC needs both classes ({positives} positive, {negatives} negative)")]
    OneClassOnly { positives: usize, negatives: usize },
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("invalid fold count k = {k} for n = {n}")]
    BadK { k: usize, n: usize },
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: GlmError,
    },
}

fn class_counts(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    let positives = labels.iter().filter(|l| **l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::OneClassOnly { positives, negatives });
    }
    Ok((positives, negatives))
}

/// Indices sorted by score, ascending, NaN-safe.
fn ascending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    order
}

/// Mann–Whitney AUC: the fraction of (positive, negative) pairs in which the
/// positive scores higher, ties counting one half. O(n log n) via mid-ranks.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    let (n_pos, n_neg) = class_counts(scores, labels)?;
    let order = ascending(scores);
    // Sum over positives of (#negatives strictly below + half the tied negatives),
    // accumulated in integers of half-units so the result is exact.
    let mut twice_wins: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]].total_cmp(&scores[order[i]]) == Ordering::Equal {
            j += 1;
        }
        let group = &order[i..j];
        let pos = group.iter().filter(|&&k| labels[k]).count() as u128;
        let neg = group.len() as u128 - pos;
        twice_wins += pos * (2 * neg_below + neg);
        neg_below += neg;
        i = j;
    }
    Ok(twice_wins as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Rows scoring at or above this value are called positive.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    pub fn trapezoid_area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) * 0.5)
            .sum()
    }
}

/// ROC curve from a threshold sweep over the distinct scores, highest first.
/// Starts at (0, 0) with threshold +inf and ends at (1, 1).
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve, EvalError> {
    let (n_pos, n_neg) = class_counts(scores, labels)?;
    let mut order = ascending(scores);
    order.reverse();
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]].total_cmp(&t) == Ordering::Equal {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
            threshold: t,
        });
    }
    Ok(RocCurve {
        points,
        auc: auc(scores, labels)?,
    })
}

/// Fold index per row. Rows are grouped by class (negatives, then positives),
/// each group shuffled by the seeded generator, and the concatenation dealt
/// round-robin to folds, so fold sizes differ by at most one overall and
/// within each class.
pub fn stratified_kfold(labels: &[bool], k: usize, seed: u64) -> Result<Vec<usize>, EvalError> {
    let n = labels.len();
    if k < 2 || k > n {
        return Err(EvalError::BadK { k, n });
    }
    let mut rng = Xoshiro256::seed_from_u64(seed);
    let mut folds = vec![0; n];
    let mut slot = 0;
    for class in [false, true] {
        let mut rows: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        rng.shuffle(&mut rows);
        for i in rows {
            folds[i] = slot % k;
            slot += 1;
        }
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub k: usize,
    pub seed: u64,
    /// `None` for a held-out fold that lacks one of the classes.
    pub per_fold_auc: Vec<Option<f64>>,
    pub mean_auc: f64,
    pub pooled_auc: f64,
    /// Held-out linear predictors (log-odds) in row order of the input matrix.
    pub held_out_scores: Vec<f64>,
    pub folds: Vec<usize>,
}

fn fit_fold(
    train: &FeatureMatrix,
    alpha_stay: Option<f64>,
    opts: &FitOptions,
) -> Result<LogisticModel, GlmError> {
    match alpha_stay {
        None => fit_logistic(train, opts),
        Some(alpha) => backward_eliminate(train, alpha, &[], opts).map(|t| t.final_model),
    }
}

/// k-fold cross-validated AUC. Each fold's model (with backward elimination
/// when `alpha_stay` is given) is fitted on the other k − 1 folds only and
/// scores its own held-out rows by linear predictor.
pub fn cross_validated_auc(
    fm: &FeatureMatrix,
    k: usize,
    seed: u64,
    alpha_stay: Option<f64>,
    opts: &FitOptions,
) -> Result<CvReport, EvalError> {
    let labels: Vec<bool> = fm.y.iter().map(|v| *v > 0.5).collect();
    class_counts(&vec![0.0; labels.len()], &labels)?;
    let folds = stratified_kfold(&labels, k, seed)?;

    let per_fold: Vec<Result<(Vec<usize>, Vec<f64>), EvalError>> = (0..k)
        .into_par_iter()
        .map(|fold| {
            let train: Vec<usize> = (0..fm.nrows()).filter(|&i| folds[i] != fold).collect();
            let test: Vec<usize> = (0..fm.nrows()).filter(|&i| folds[i] == fold).collect();
            let model = fit_fold(&fm.select_rows(&train), alpha_stay, opts)
                .map_err(|source| EvalError::Fold { fold, source })?;
            let eta = model
                .linear_predictors_named(&fm.x.select_rows(&test), &fm.column_names)
                .map_err(|source| EvalError::Fold { fold, source })?;
            Ok((test, eta.iter().copied().collect()))
        })
        .collect();

    let mut held_out_scores = vec![0.0; fm.nrows()];
    let mut per_fold_auc = Vec::with_capacity(k);
    for result in per_fold {
        let (rows, scores) = result?;
        let fold_labels: Vec<bool> = rows.iter().map(|&i| labels[i]).collect();
        per_fold_auc.push(auc(&scores, &fold_labels).ok());
        for (i, s) in rows.into_iter().zip(scores) {
            held_out_scores[i] = s;
        }
    }
    let scored: Vec<f64> = per_fold_auc.iter().flatten().copied().collect();
    let mean_auc = if scored.is_empty() {
        f64::NAN
    } else {
        scored.iter().sum::<f64>() / scored.len() as f64
    };
    let pooled_auc = auc(&held_out_scores, &labels)?;
    Ok(CvReport {
        k,
        seed,
        per_fold_auc,
        mean_auc,
        pooled_auc,
        held_out_scores,
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::INTERCEPT;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    /// O(n²) pair count, the reference for `auc`.
    fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert_eq!(auc(&[0.7, 0.7, 0.3], &[true, false, false]).unwrap(), 0.75);
        assert!(matches!(auc(&[0.1, 0.2], &[true, true]), Err(EvalError::OneClassOnly { .. })));
        assert!(matches!(auc(&[0.1], &[true, false]), Err(EvalError::LengthMismatch { .. })));
    }

    #[test]
    fn roc_examples() {
        let c = roc_curve(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert!(c.points.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
        let c = roc_curve(&[0.5; 4], &[true, false, true, false]).unwrap();
        assert_eq!(c.points.len(), 2);
        assert_eq!((c.points[1].fpr, c.points[1].tpr), (1.0, 1.0));
        assert_eq!(c.trapezoid_area(), 0.5);
    }

    #[test]
    fn roc_area_matches_auc_on_random_scores() {
        let mut rng = Xoshiro256::seed_from_u64(100);
        let scores: Vec<f64> = (0..100).map(|_| (rng.next_f64() * 20.0).floor()).collect();
        let labels: Vec<bool> = (0..100).map(|_| rng.bernoulli(0.4)).collect();
        let c = roc_curve(&scores, &labels).unwrap();
        assert!((c.trapezoid_area() - c.auc).abs() < 1e-12);
        let first = &c.points[0];
        let last = c.points.last().unwrap();
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in c.points.windows(2) {
            assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
    }

    #[test]
    fn kfold_examples() {
        let labels = [true, true, true, true, false, false, false, false, false, false];
        let folds = stratified_kfold(&labels, 5, 42).unwrap();
        let mut sizes = [0; 5];
        let mut pos = [0; 5];
        for (i, f) in folds.iter().enumerate() {
            sizes[*f] += 1;
            if labels[i] {
                pos[*f] += 1;
            }
        }
        assert_eq!(sizes, [2; 5]);
        let mut spread = pos.to_vec();
        spread.sort_unstable();
        assert_eq!(spread, vec![0, 1, 1, 1, 1]);
        assert_eq!(folds, stratified_kfold(&labels, 5, 42).unwrap());
        assert_eq!(stratified_kfold(&labels, 11, 1), Err(EvalError::BadK { k: 11, n: 10 }));
        assert_eq!(stratified_kfold(&labels, 1, 1), Err(EvalError::BadK { k: 1, n: 10 }));
    }

    fn matrix_with(x1: Vec<f64>, y: Vec<f64>) -> FeatureMatrix {
        let n = y.len();
        FeatureMatrix {
            column_names: vec![INTERCEPT.into(), "x1".into()],
            x: DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x1[i] }),
            y: DVector::from_vec(y),
            row_ids: (0..n).map(|i| format!("{i:05}")).collect(),
        }
    }

    #[test]
    fn cv_is_deterministic_and_consistent() {
        let mut rng = Xoshiro256::seed_from_u64(8);
        let x1: Vec<f64> = (0..600).map(|_| rng.standard_normal()).collect();
        let y: Vec<f64> = x1
            .iter()
            .map(|v| if rng.bernoulli(crate::glm::sigmoid(-0.5 + 1.2 * v)) { 1.0 } else { 0.0 })
            .collect();
        let fm = matrix_with(x1, y);
        let a = cross_validated_auc(&fm, 5, 3, None, &FitOptions::default()).unwrap();
        let b = cross_validated_auc(&fm, 5, 3, None, &FitOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.per_fold_auc.len(), 5);
        let mean = a.per_fold_auc.iter().flatten().sum::<f64>() / 5.0;
        assert!((a.mean_auc - mean).abs() < 1e-15);
        assert!(a.pooled_auc > 0.7);
        let with_elim = cross_validated_auc(&fm, 5, 3, Some(0.15), &FitOptions::default()).unwrap();
        assert_eq!(with_elim.per_fold_auc, a.per_fold_auc);
    }

    #[test]
    fn cv_names_the_failing_fold() {
        // Outcome is a deterministic function of x1: every training fit separates.
        let x1: Vec<f64> = (0..50).map(|i| i as f64 - 24.5).collect();
        let y: Vec<f64> = x1.iter().map(|v| if *v > 0.0 { 1.0 } else { 0.0 }).collect();
        let err = cross_validated_auc(&matrix_with(x1, y), 5, 1, None, &FitOptions::default()).unwrap_err();
        assert!(matches!(err, EvalError::Fold { source: GlmError::SeparationDetected { .. }, .. }), "{err}");
    }

    #[test]
    fn rare_class_folds_report_none() {
        let mut rng = Xoshiro256::seed_from_u64(2);
        let x1: Vec<f64> = (0..60).map(|_| rng.standard_normal()).collect();
        let mut y = vec![0.0; 60];
        y[3] = 1.0;
        y[17] = 1.0;
        y[40] = 1.0;
        let r = cross_validated_auc(&matrix_with(x1, y), 5, 9, None, &FitOptions::default()).unwrap();
        assert_eq!(r.per_fold_auc.iter().filter(|a| a.is_none()).count(), 2);
        assert!(r.mean_auc.is_finite());
    }

    proptest! {
        #[test]
        fn auc_matches_brute_force(
            pairs in proptest::collection::vec((0u8..12, any::<bool>()), 2..120)
        ) {
            let scores: Vec<f64> = pairs.iter().map(|(s, _)| *s as f64 / 4.0).collect();
            let labels: Vec<bool> = pairs.iter().map(|(_, l)| *l).collect();
            prop_assume!(labels.iter().any(|l| *l) && labels.iter().any(|l| !*l));
            let fast = auc(&scores, &labels).unwrap();
            prop_assert!((fast - brute_auc(&scores, &labels)).abs() < 1e-12);
            // Reflection and monotone transforms.
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            prop_assert_eq!(fast + auc(&neg, &labels).unwrap(), 1.0);
            let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
            prop_assert_eq!(fast, auc(&warped, &labels).unwrap());
        }

        #[test]
        fn every_row_gets_one_fold(labels in proptest::collection::vec(any::<bool>(), 5..200), k in 2usize..6, seed in any::<u64>()) {
            let folds = stratified_kfold(&labels, k, seed).unwrap();
            prop_assert_eq!(folds.len(), labels.len());
            for class in [false, true] {
                let mut counts = vec![0usize; k];
                for (f, l) in folds.iter().zip(&labels) {
                    prop_assert!(*f < k);
                    if *l == class { counts[*f] += 1; }
                }
                let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
                prop_assert!(hi - lo <= 1);
            }
        }
    }
}
