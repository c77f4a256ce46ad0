//! Validation-set threshold selection.
//!
//! A decision `p >= t` is a function of where `t` falls among the sorted
//! distinct probabilities, so only the candidates `{0}`, the midpoints of
//! consecutive distinct values, and `{1}` need to be scored. A single sorted
//! pass updates the confusion counts incrementally while `t` moves upward.

use core::fmt;
use core::str::FromStr;

use alloc::string::ToString;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a sweep maximizes. The positive class is the one predicted when
/// `p >= t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// F1 of the positive class.
    F1Positive,
    /// F1 of the negative class.
    F1Negative,
    /// Mean of both one-vs-rest F1s.
    MacroF1,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::F1Positive => "f1-positive",
            Objective::F1Negative => "f1-negative",
            Objective::MacroF1 => "macro-f1",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f1-positive" => Ok(Objective::F1Positive),
            "f1-negative" => Ok(Objective::F1Negative),
            "macro-f1" => Ok(Objective::MacroF1),
            other => Err(Error::InvalidConfig { field: "objective", reason: other.to_string() }),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    tp: u64,
    fp: u64,
    fn_: u64,
    tn: u64,
}

fn f1_fraction(tp: u64, fp: u64, fn_: u64) -> f64 {
    let den = 2 * tp + fp + fn_;
    if den == 0 {
        0.0
    } else {
        (2 * tp) as f64 / den as f64
    }
}

impl Counts {
    fn score(&self, objective: Objective) -> f64 {
        let pos = f1_fraction(self.tp, self.fp, self.fn_);
        let neg = f1_fraction(self.tn, self.fn_, self.fp);
        match objective {
            Objective::F1Positive => pos,
            Objective::F1Negative => neg,
            Objective::MacroF1 => (pos + neg) / 2.0,
        }
    }
}

/// Chosen threshold and the validation objective it reached, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCalibration {
    pub threshold: f64,
    pub achieved_score: f64,
    pub objective: Objective,
}

fn validate(probs: &[f64], truth: &[bool]) -> Result<()> {
    if probs.len() != truth.len() {
        return Err(Error::LengthMismatch(probs.len(), truth.len()));
    }
    if probs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !truth.iter().any(|&t| t) || truth.iter().all(|&t| t) {
        return Err(Error::SingleClass);
    }
    if let Some(&p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    Ok(())
}

/// A threshold strictly above `lo` and at most `hi`, for `lo < hi`.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = 0.5 * (lo + hi);
    // adjacent floats can round the midpoint back onto `lo`
    if mid <= lo {
        hi
    } else {
        mid
    }
}

/// Global maximizer of `objective` over all `p >= t` decisions; ties go to
/// the smallest candidate threshold.
pub fn sweep_threshold(probs: &[f64], truth: &[bool], objective: Objective) -> Result<ThresholdCalibration> {
    validate(probs, truth)?;
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));

    let n_pos = truth.iter().filter(|&&t| t).count() as u64;
    // t = 0 predicts everything positive
    let mut counts = Counts { tp: n_pos, fp: probs.len() as u64 - n_pos, fn_: 0, tn: 0 };
    let mut best = (0.0, counts.score(objective));

    let mut start = 0;
    while start < order.len() {
        let value = probs[order[start]];
        let mut end = start;
        while end < order.len() && probs[order[end]] == value {
            end += 1;
        }
        let is_last = end == order.len();
        if is_last && value >= 1.0 {
            // p >= 1 keeps this group positive; nothing left to move
            break;
        }
        for &i in &order[start..end] {
            if truth[i] {
                counts.tp -= 1;
                counts.fn_ += 1;
            } else {
                counts.fp -= 1;
                counts.tn += 1;
            }
        }
        let threshold = if is_last { 1.0 } else { midpoint(value, probs[order[end]]) };
        let score = counts.score(objective);
        if score > best.1 {
            best = (threshold, score);
        }
        start = end;
    }

    Ok(ThresholdCalibration { threshold: best.0, achieved_score: 100.0 * best.1, objective })
}

/// Objective value, in percent, of thresholding `probs` at `threshold`.
pub fn evaluate_threshold(probs: &[f64], truth: &[bool], threshold: f64, objective: Objective) -> Result<f64> {
    if probs.len() != truth.len() {
        return Err(Error::LengthMismatch(probs.len(), truth.len()));
    }
    let mut counts = Counts::default();
    for (&p, &t) in probs.iter().zip(truth) {
        match (p >= threshold, t) {
            (true, true) => counts.tp += 1,
            (true, false) => counts.fp += 1,
            (false, true) => counts.fn_ += 1,
            (false, false) => counts.tn += 1,
        }
    }
    Ok(100.0 * counts.score(objective))
}

/// Inclusive comparison: a probability equal to the threshold is positive.
pub fn apply_threshold(prob: f64, cal: &ThresholdCalibration) -> bool {
    prob >= cal.threshold
}
