//! Classification metrics on a 0-100 scale.
//!
//! Precision, recall and F1 resolve `0/0` to 0 so that macro averages stay
//! defined when a fold never predicts some class. AUROC is the Mann-Whitney
//! statistic computed from average ranks, so tied scores count one half.

use core::fmt;

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::FinalLabel;

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Square count grid, rows are truth and columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn from_indices(n_classes: usize, truth: &[usize], pred: &[usize]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::LengthMismatch(truth.len(), pred.len()));
        }
        if truth.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut counts = vec![0; n_classes * n_classes];
        for (&t, &p) in truth.iter().zip(pred) {
            counts[t * n_classes + p] += 1;
        }
        Ok(ConfusionMatrix { n: n_classes, counts })
    }

    /// Three-class matrix ordered rubbish, healthy, unhealthy.
    pub fn from_labels(truth: &[FinalLabel], pred: &[FinalLabel]) -> Result<Self> {
        let t: Vec<usize> = truth.iter().map(|l| l.index()).collect();
        let p: Vec<usize> = pred.iter().map(|l| l.index()).collect();
        Self::from_indices(FinalLabel::ALL.len(), &t, &p)
    }

    /// Row-major counts; `counts.len()` must be a perfect square.
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        let n = (0..=counts.len()).find(|n| n * n >= counts.len()).unwrap_or(0);
        if n * n != counts.len() {
            return Err(Error::LengthMismatch(counts.len(), n * n));
        }
        if counts.iter().all(|&c| c == 0) {
            return Err(Error::EmptyInput);
        }
        Ok(ConfusionMatrix { n, counts })
    }

    pub fn n_classes(&self) -> usize {
        self.n
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Truth-row sum.
    pub fn support(&self, class: usize) -> u64 {
        (0..self.n).map(|p| self.get(class, p)).sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        (0..self.n).map(|t| self.get(t, class)).sum()
    }

    pub fn precision(&self, class: usize) -> f64 {
        100.0 * ratio(self.get(class, class), self.predicted(class))
    }

    pub fn recall(&self, class: usize) -> f64 {
        100.0 * ratio(self.get(class, class), self.support(class))
    }

    pub fn f1(&self, class: usize) -> f64 {
        let tp = self.get(class, class);
        let fp = self.predicted(class) - tp;
        let fn_ = self.support(class) - tp;
        100.0 * ratio(2 * tp, 2 * tp + fp + fn_)
    }

    pub fn per_class_f1(&self) -> Vec<f64> {
        (0..self.n).map(|c| self.f1(c)).collect()
    }

    pub fn accuracy(&self) -> f64 {
        let trace: u64 = (0..self.n).map(|c| self.get(c, c)).sum();
        100.0 * ratio(trace, self.total())
    }

    /// Unweighted means over all classes of the matrix.
    pub fn macro_metrics(&self) -> MacroMetrics {
        let mean = |f: &dyn Fn(usize) -> f64| (0..self.n).map(f).sum::<f64>() / self.n as f64;
        MacroMetrics {
            macro_f1: mean(&|c| self.f1(c)),
            macro_precision: mean(&|c| self.precision(c)),
            macro_recall: mean(&|c| self.recall(c)),
            accuracy: self.accuracy(),
        }
    }

    /// Per-class F1 weighted by truth support.
    pub fn weighted_f1(&self) -> f64 {
        let total = self.total() as f64;
        (0..self.n).map(|c| self.support(c) as f64 * self.f1(c)).sum::<f64>() / total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub macro_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub accuracy: f64,
}

/// Area under the ROC curve, in percent.
///
/// Runs in `O(n log n)`: scores are sorted once, tie groups receive their
/// average rank, and the rank sum of the positives gives the Mann-Whitney U.
/// Ranks are carried doubled so every intermediate stays an exact integer.
pub fn auroc_binary(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut doubled_rank_sum: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        // average 1-based rank of positions start..=end, doubled
        let doubled = (start + end + 2) as u64;
        let positives = order[start..=end].iter().filter(|&&i| labels[i]).count() as u64;
        doubled_rank_sum += doubled * positives;
        start = end + 1;
    }
    let doubled_u = doubled_rank_sum - n_pos * (n_pos + 1);
    Ok(percent_of(doubled_u, 2 * n_pos * n_neg))
}

/// `100 * num / den`, computed from whichever side of one half is smaller so
/// that complementary fractions sum to exactly 100.
fn percent_of(num: u64, den: u64) -> f64 {
    if 2 * num <= den {
        100.0 * num as f64 / den as f64
    } else {
        100.0 - 100.0 * (den - num) as f64 / den as f64
    }
}

/// Unweighted mean of one-vs-rest AUROCs over the three final classes.
pub fn auroc_macro_ovr(scores: &[[f64; 3]], truth: &[FinalLabel]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::LengthMismatch(scores.len(), truth.len()));
    }
    let mut sum = 0.0;
    for class in FinalLabel::ALL {
        if !truth.contains(&class) {
            return Err(Error::MissingClass(class));
        }
        let column: Vec<f64> = scores.iter().map(|s| s[class.index()]).collect();
        let labels: Vec<bool> = truth.iter().map(|&t| t == class).collect();
        sum += auroc_binary(&column, &labels)?;
    }
    Ok(sum / 3.0)
}

/// One fold's row of the results table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub auroc: f64,
    pub accuracy: f64,
    /// Ordered rubbish, healthy, unhealthy.
    pub per_class_f1: [f64; 3],
}

impl FoldMetrics {
    pub const NAMES: [&'static str; 9] = [
        "macro_f1",
        "weighted_f1",
        "precision",
        "recall",
        "auroc",
        "accuracy",
        "f1_rubbish",
        "f1_healthy",
        "f1_unhealthy",
    ];

    pub fn compute(truth: &[FinalLabel], pred: &[FinalLabel], scores: &[[f64; 3]]) -> Result<Self> {
        let cm = ConfusionMatrix::from_labels(truth, pred)?;
        let m = cm.macro_metrics();
        Ok(FoldMetrics {
            macro_f1: m.macro_f1,
            weighted_f1: cm.weighted_f1(),
            precision: m.macro_precision,
            recall: m.macro_recall,
            auroc: auroc_macro_ovr(scores, truth)?,
            accuracy: m.accuracy,
            per_class_f1: [cm.f1(0), cm.f1(1), cm.f1(2)],
        })
    }

    /// Values in [`FoldMetrics::NAMES`] order.
    pub fn values(&self) -> [f64; 9] {
        let [r, h, u] = self.per_class_f1;
        [self.macro_f1, self.weighted_f1, self.precision, self.recall, self.auroc, self.accuracy, r, h, u]
    }

    fn from_values(v: [f64; 9]) -> Self {
        FoldMetrics {
            macro_f1: v[0],
            weighted_f1: v[1],
            precision: v[2],
            recall: v[3],
            auroc: v[4],
            accuracy: v[5],
            per_class_f1: [v[6], v[7], v[8]],
        }
    }
}

/// Mean and sample standard deviation of one metric across folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
}

/// Renders as `78.46 ± 1.17`.
impl fmt::Display for MetricSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.std)
    }
}

/// Mean and `k - 1` standard deviation, summed left to right.
pub fn summarize(values: &[f64]) -> Result<MetricSummary> {
    if values.len() < 2 {
        return Err(Error::TooFewFolds(values.len()));
    }
    let k = values.len() as f64;
    // shifting by the first value keeps identical inputs exact
    let pivot = values[0];
    let mean = pivot + values.iter().map(|v| v - pivot).sum::<f64>() / k;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
    Ok(MetricSummary { mean, std: libm::sqrt(var) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub macro_f1: MetricSummary,
    pub weighted_f1: MetricSummary,
    pub precision: MetricSummary,
    pub recall: MetricSummary,
    pub auroc: MetricSummary,
    pub accuracy: MetricSummary,
    pub per_class_f1: [MetricSummary; 3],
}

impl AggregateMetrics {
    pub fn values(&self) -> [MetricSummary; 9] {
        let [r, h, u] = self.per_class_f1;
        [self.macro_f1, self.weighted_f1, self.precision, self.recall, self.auroc, self.accuracy, r, h, u]
    }

    /// Fold-average of every metric, as a plain row.
    pub fn means(&self) -> FoldMetrics {
        FoldMetrics::from_values(self.values().map(|s| s.mean))
    }
}

pub fn aggregate_folds(per_fold: &[FoldMetrics]) -> Result<AggregateMetrics> {
    let mut out = [MetricSummary { mean: 0.0, std: 0.0 }; 9];
    for (i, slot) in out.iter_mut().enumerate() {
        let column: Vec<f64> = per_fold.iter().map(|m| m.values()[i]).collect();
        *slot = summarize(&column)?;
    }
    Ok(AggregateMetrics {
        macro_f1: out[0],
        weighted_f1: out[1],
        precision: out[2],
        recall: out[3],
        auroc: out[4],
        accuracy: out[5],
        per_class_f1: [out[6], out[7], out[8]],
    })
}

/// Uniform random labels and uniform random score vectors, independent of
/// the truth. The chance row of the results table.
pub fn random_baseline<R: Rng + ?Sized>(truth: &[FinalLabel], rng: &mut R) -> Result<FoldMetrics> {
    let pred: Vec<FinalLabel> = truth.iter().map(|_| FinalLabel::ALL[rng.random_range(0..3)]).collect();
    let scores: Vec<[f64; 3]> = truth
        .iter()
        .map(|_| {
            let raw: [f64; 3] = [rng.random(), rng.random(), rng.random()];
            let sum: f64 = raw.iter().sum();
            if sum > 0.0 {
                raw.map(|v| v / sum)
            } else {
                [1.0 / 3.0; 3]
            }
        })
        .collect();
    FoldMetrics::compute(truth, &pred, &scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use FinalLabel::{Healthy as H, Rubbish as R, Unhealthy as U};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn confusion_matrix_counts() {
        let cm = ConfusionMatrix::from_labels(&[H, H, U], &[H, H, U]).unwrap();
        assert_eq!(cm.get(1, 1), 2);
        assert_eq!(cm.get(2, 2), 1);
        assert_eq!(cm.total(), 3);
        assert_eq!(
            (0..3)
                .flat_map(|i| (0..3).map(move |j| (i, j)))
                .filter(|&(i, j)| i != j)
                .map(|(i, j)| cm.get(i, j))
                .sum::<u64>(),
            0
        );

        let cm = ConfusionMatrix::from_labels(&[R, H], &[H, R]).unwrap();
        assert_eq!(cm.get(0, 0) + cm.get(1, 1) + cm.get(2, 2), 0);
        assert_eq!(cm.get(0, 1), 1);
        assert_eq!(cm.get(1, 0), 1);
    }

    #[test]
    fn confusion_matrix_errors() {
        assert_eq!(ConfusionMatrix::from_labels(&[R], &[]), Err(Error::LengthMismatch(1, 0)));
        assert_eq!(ConfusionMatrix::from_labels(&[], &[]), Err(Error::EmptyInput));
        assert!(ConfusionMatrix::from_counts(vec![1, 2, 3]).is_err());
    }

    #[test]
    fn per_class_f1_cases() {
        let cm = ConfusionMatrix::from_counts(vec![3, 0, 0, 0, 4, 0, 0, 0, 5]).unwrap();
        assert_eq!(cm.per_class_f1(), [100.0, 100.0, 100.0]);

        // class 0 never predicted and never correct
        let cm = ConfusionMatrix::from_counts(vec![0, 5, 0, 7]).unwrap();
        assert_eq!(cm.f1(0), 0.0);
        assert_eq!(cm.precision(0), 0.0);

        // TP=8, FP=2, FN=4 for class 0: 2*0.8*(2/3)/(0.8+2/3) = 16/22
        let cm = ConfusionMatrix::from_counts(vec![8, 4, 2, 6]).unwrap();
        assert!(close(cm.f1(0), 72.727_272_727_272_73, 1e-9));
        assert!(close(cm.f1(0), 72.73, 0.005));
    }

    #[test]
    fn macro_metrics_cases() {
        let cm = ConfusionMatrix::from_counts(vec![3, 0, 0, 0, 4, 0, 0, 0, 5]).unwrap();
        let m = cm.macro_metrics();
        assert_eq!((m.macro_f1, m.macro_precision, m.macro_recall, m.accuracy), (100.0, 100.0, 100.0, 100.0));

        // [[5,1],[2,4]]: F1 = 10/13 and 8/11
        let cm = ConfusionMatrix::from_counts(vec![5, 1, 2, 4]).unwrap();
        let m = cm.macro_metrics();
        assert_eq!(m.accuracy, 75.0);
        assert!(close(m.macro_f1, 100.0 * (10.0 / 13.0 + 8.0 / 11.0) / 2.0, 1e-12));
        assert!(close(m.macro_f1, 74.83, 0.005));
    }

    #[test]
    fn weighted_f1_cases() {
        // supports 90/10, F1 80/40 -> 76
        // [[60,30],[0,10]]: F1_0 = 120/150, F1_1 = 20/50
        let cm = ConfusionMatrix::from_counts(vec![60, 30, 0, 10]).unwrap();
        assert!(close(cm.f1(0), 80.0, 1e-9) && close(cm.f1(1), 40.0, 1e-9), "{:?}", cm.per_class_f1());
        assert!(close(cm.weighted_f1(), 76.0, 1e-9));

        let balanced = ConfusionMatrix::from_counts(vec![7, 2, 1, 3, 5, 2, 0, 4, 6]).unwrap();
        assert!(close(balanced.weighted_f1(), balanced.macro_metrics().macro_f1, 1e-12));

        let single = ConfusionMatrix::from_counts(vec![6, 4, 0, 0]).unwrap();
        assert_eq!(single.weighted_f1(), single.f1(0));
    }

    #[test]
    fn auroc_cases() {
        assert_eq!(auroc_binary(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]).unwrap(), 100.0);
        assert_eq!(auroc_binary(&[0.3; 6], &[true, false, true, false, false, true]).unwrap(), 50.0);
        // pairs (pos, neg): (.9,.8) (.9,.4) (.7,.4) (.6,.4) win; (.7,.8) (.6,.8) lose -> 4/6
        let a = auroc_binary(&[0.9, 0.8, 0.7, 0.6, 0.4], &[true, false, true, true, false]).unwrap();
        assert!(close(a, 200.0 / 3.0, 1e-12));
        assert_eq!(auroc_binary(&[0.1, 0.2], &[true, true]), Err(Error::SingleClass));
        assert_eq!(auroc_binary(&[0.1], &[true, false]), Err(Error::LengthMismatch(1, 2)));
    }

    #[test]
    fn auroc_ovr_needs_all_classes() {
        let scores = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert_eq!(auroc_macro_ovr(&scores, &[R, H]), Err(Error::MissingClass(U)));
        let scores = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.2, 0.8]];
        assert_eq!(auroc_macro_ovr(&scores, &[R, H, U]).unwrap(), 100.0);
    }

    #[test]
    fn summaries() {
        let s = summarize(&[0.1; 5]).unwrap();
        assert_eq!(s, MetricSummary { mean: 0.1, std: 0.0 });
        let s = summarize(&[75.0, 77.0]).unwrap();
        assert_eq!(s.mean, 76.0);
        assert!(close(s.std, core::f64::consts::SQRT_2, 1e-12));
        assert_eq!(summarize(&[1.0]), Err(Error::TooFewFolds(1)));
        let s = MetricSummary { mean: 78.4649, std: 1.1711 };
        assert_eq!(alloc::format!("{s}"), "78.46 ± 1.17");
    }
}
