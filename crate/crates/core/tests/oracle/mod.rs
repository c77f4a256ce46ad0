//! Definitional reference implementations used only by tests. Nothing here
//! calls into the code under test.

#![allow(dead_code)]

/// Per-class precision, recall and F1 via P and R; 0/0 is 0.
pub fn per_class(truth: &[usize], pred: &[usize], n_classes: usize) -> Vec<(f64, f64, f64)> {
    (0..n_classes)
        .map(|c| {
            let mut tp = 0.0;
            let mut fp = 0.0;
            let mut fn_ = 0.0;
            for (&t, &p) in truth.iter().zip(pred) {
                if t == c && p == c {
                    tp += 1.0;
                } else if p == c {
                    fp += 1.0;
                } else if t == c {
                    fn_ += 1.0;
                }
            }
            let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
            let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
            (precision, recall, f1)
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct Reference {
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
}

/// Fractions in [0, 1].
pub fn reference_metrics(truth: &[usize], pred: &[usize], n_classes: usize) -> (Vec<f64>, Reference) {
    let pc = per_class(truth, pred, n_classes);
    let n = truth.len() as f64;
    let k = n_classes as f64;
    let f1: Vec<f64> = pc.iter().map(|x| x.2).collect();
    let support = |c: usize| truth.iter().filter(|&&t| t == c).count() as f64;
    let r = Reference {
        macro_f1: f1.iter().sum::<f64>() / k,
        weighted_f1: (0..n_classes).map(|c| support(c) / n * f1[c]).sum(),
        precision: pc.iter().map(|x| x.0).sum::<f64>() / k,
        recall: pc.iter().map(|x| x.1).sum::<f64>() / k,
        accuracy: truth.iter().zip(pred).filter(|(t, p)| t == p).count() as f64 / n,
    };
    (f1, r)
}

/// Pair counting over every positive-negative pair, ties count one half.
pub fn auroc_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Mean of per-class one-vs-rest pair-counting AUROCs.
pub fn auroc_ovr_pairs(scores: &[[f64; 3]], truth: &[usize]) -> f64 {
    (0..3)
        .map(|c| {
            let s: Vec<f64> = scores.iter().map(|v| v[c]).collect();
            let l: Vec<bool> = truth.iter().map(|&t| t == c).collect();
            auroc_pairs(&s, &l)
        })
        .sum::<f64>()
        / 3.0
}

pub fn f1_counts(tp: u64, fp: u64, fn_: u64) -> f64 {
    if 2 * tp + fp + fn_ == 0 {
        0.0
    } else {
        (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// 0 = F1 of positive, 1 = F1 of negative, 2 = mean of both.
pub fn objective_at(probs: &[f64], truth: &[bool], t: f64, objective: u8) -> f64 {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &y) in probs.iter().zip(truth) {
        match (p >= t, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let pos = f1_counts(tp, fp, fn_);
    let neg = f1_counts(tn, fn_, fp);
    match objective {
        0 => pos,
        1 => neg,
        _ => (pos + neg) / 2.0,
    }
}

/// Candidate thresholds: 0, midpoints of consecutive distinct values, 1.
pub fn candidates(probs: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = probs.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    let mut out = vec![0.0];
    for w in v.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        out.push(if mid <= w[0] { w[1] } else { mid });
    }
    out.push(1.0);
    out
}

/// (smallest maximizing candidate, maximum) by scoring every candidate.
pub fn exhaustive_sweep(probs: &[f64], truth: &[bool], objective: u8) -> (f64, f64) {
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for t in candidates(probs) {
        let s = objective_at(probs, truth, t, objective);
        if s > best.1 || (s == best.1 && t < best.0) {
            best = (t, s);
        }
    }
    best
}

/// Literal argmax over label counts; `None` on a tie.
pub fn argmax_vote(votes: &[bool]) -> Option<bool> {
    let yes = votes.iter().filter(|&&v| v).count();
    let no = votes.len() - yes;
    match yes.cmp(&no) {
        std::cmp::Ordering::Greater => Some(true),
        std::cmp::Ordering::Less => Some(false),
        std::cmp::Ordering::Equal => None,
    }
}

/// 0 rubbish, 1 healthy, 2 unhealthy from per-fold booleans
/// (`rubbish[j]`, `healthy[j]`); even splits go to suitable and unhealthy.
pub fn cascade_reference(rubbish: &[bool], healthy: &[bool]) -> usize {
    if argmax_vote(rubbish) == Some(true) {
        return 0;
    }
    match argmax_vote(healthy) {
        Some(true) => 1,
        _ => 2,
    }
}
