//! Evaluation primitives: ROC AUC, forecast error metrics, and stratified
//! k-fold splitting.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("roc_auc needs both classes, got {positives} positives and {negatives} negatives")]
    SingleClass { positives: usize, negatives: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    Empty,
    #[error("k = {k} exceeds n = {n}")]
    TooManyFolds { k: usize, n: usize },
    #[error("score {0} is not finite")]
    NonFiniteScore(f64),
}

pub type Result<T> = std::result::Result<T, MetricError>;

/// One point of a ROC curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// Area under the ROC curve, with half credit for ties
/// (the Mann-Whitney convention): P(s⁺ > s⁻) + ½·P(s⁺ = s⁻).
///
/// Computed by the rank formulation with midranks, O(n log n).
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if let Some(&s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(MetricError::NonFiniteScore(s));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass {
            positives: n_pos,
            negatives: n_neg,
        });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    // midranks over tie groups, then U = R⁺ − n⁺(n⁺+1)/2
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// The ROC curve as (threshold, TPR, FPR) points, from the strictest
/// threshold to the loosest. Rates are monotone non-decreasing.
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass {
            positives: n_pos,
            negatives: n_neg,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        tpr: 0.0,
        fpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            tpr: tp as f64 / n_pos as f64,
            fpr: fp as f64 / n_neg as f64,
        });
    }
    Ok(points)
}

/// Trapezoidal area under [`roc_points`]; agrees with [`roc_auc`] to
/// floating-point accuracy, including under ties.
pub fn roc_auc_trapezoid(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let pts = roc_points(scores, labels)?;
    let mut area = 0.0;
    for w in pts.windows(2) {
        area += (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0;
    }
    Ok(area)
}

/// Mean absolute error.
pub fn mae(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(pred, actual)?;
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a).abs())
        .sum::<f64>()
        / n)
}

/// Root mean squared error.
pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(pred, actual)?;
    let n = pred.len() as f64;
    let mse = pred
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum::<f64>()
        / n;
    Ok(mse.sqrt())
}

fn check_pair(pred: &[f64], actual: &[f64]) -> Result<()> {
    if pred.len() != actual.len() {
        return Err(MetricError::LengthMismatch {
            left: pred.len(),
            right: actual.len(),
        });
    }
    if pred.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Disjoint, exhaustive index folds.
#[derive(Debug, Clone)]
pub struct KfoldSplit {
    pub folds: Vec<Vec<usize>>,
    /// False when a class had fewer than `k` members and the split fell back
    /// to unstratified shuffling.
    pub stratified: bool,
}

/// Stratified k-fold split of `n` items, deterministic for a given seed.
///
/// Fold sizes differ by at most one; within each class the per-fold counts
/// also differ by at most one. When any class has fewer than `k` members the
/// split falls back to a plain shuffled partition (`stratified == false`).
pub fn kfold_split(n: usize, labels: &[bool], k: usize, seed: u64) -> Result<KfoldSplit> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    if labels.len() != n {
        return Err(MetricError::LengthMismatch {
            left: n,
            right: labels.len(),
        });
    }
    if k > n || k == 0 {
        return Err(MetricError::TooManyFolds { k, n });
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = n - n_pos;
    let stratified = n_pos >= k && n_neg >= k;

    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    if stratified {
        for class in [false, true] {
            let mut idx: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
            idx.shuffle(&mut rng);
            // distribute this class's remainder onto the currently smallest
            // folds so total sizes stay within one of each other
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by_key(|&f| (folds[f].len(), f));
            let base = idx.len() / k;
            let extra = idx.len() % k;
            let mut cursor = 0;
            for (pos, &f) in order.iter().enumerate() {
                let take = base + usize::from(pos < extra);
                folds[f].extend_from_slice(&idx[cursor..cursor + take]);
                cursor += take;
            }
        }
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        for (pos, &i) in idx.iter().enumerate() {
            folds[pos % k].push(i);
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(KfoldSplit { folds, stratified })
}
