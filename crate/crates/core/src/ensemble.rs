//! Model averaging within a fold, majority voting across folds, and the
//! rubbish gate that decides whether stage 2 is consulted at all.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{FinalLabel, Stage, Stage1Label, Stage2Label};
use crate::table::PredictionRecord;

/// Averaged probabilities of `m` models for one (image, fold, stage).
#[derive(Debug, Clone, PartialEq)]
pub struct FoldEnsembleScore {
    pub image_id: String,
    pub fold: u32,
    pub stage: Stage,
    pub p: Vec<f64>,
    pub m: usize,
}

/// Componentwise arithmetic mean, summed in iteration order.
pub(crate) fn mean_into<'a, I>(rows: I, out: &mut [f64]) -> usize
where
    I: IntoIterator<Item = &'a [f64]>,
{
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut m = 0;
    for row in rows {
        for (acc, v) in out.iter_mut().zip(row) {
            *acc += v;
        }
        m += 1;
    }
    if m > 0 {
        out.iter_mut().for_each(|v| *v /= m as f64);
    }
    m
}

/// Soft vote over backbones. Records are averaged in ascending model-id
/// order so the result does not depend on how they were supplied.
pub fn ensemble_average(records: &[PredictionRecord]) -> Result<FoldEnsembleScore> {
    let first = records.first().ok_or(Error::EmptyInput)?;
    if records.iter().any(|r| r.image_id != first.image_id || r.fold != first.fold || r.stage != first.stage) {
        return Err(Error::MixedKeys);
    }
    let mut sorted: Vec<&PredictionRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.model_id.cmp(&b.model_id));
    let mut p = alloc::vec![0.0; first.stage.width()];
    let m = mean_into(sorted.iter().map(|r| r.p.as_slice()), &mut p);
    Ok(FoldEnsembleScore { image_id: first.image_id.clone(), fold: first.fold, stage: first.stage, p, m })
}

/// Binary label set with a fixed winner for tied votes.
pub trait VoteLabel: Copy + Eq {
    /// Winner when both labels collect the same number of votes.
    const TIE_BREAK: Self;
}

/// Ties keep the image in the pipeline rather than discarding it.
impl VoteLabel for Stage1Label {
    const TIE_BREAK: Self = Stage1Label::Suitable;
}

/// Ties send the image to review.
impl VoteLabel for Stage2Label {
    const TIE_BREAK: Self = Stage2Label::Unhealthy;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoteOutcome<L> {
    pub label: L,
    /// Set when the tie-break rule decided the outcome.
    pub tied: bool,
}

/// Hard vote across folds. An odd number of votes always has a strict
/// majority; even splits fall back to [`VoteLabel::TIE_BREAK`].
pub fn majority_vote<L: VoteLabel>(votes: &[L]) -> Result<VoteOutcome<L>> {
    if votes.is_empty() {
        return Err(Error::EmptyInput);
    }
    let for_tie_label = votes.iter().filter(|&&v| v == L::TIE_BREAK).count();
    let against = votes.len() - for_tie_label;
    Ok(match for_tie_label.cmp(&against) {
        core::cmp::Ordering::Greater => VoteOutcome { label: L::TIE_BREAK, tied: false },
        core::cmp::Ordering::Equal => VoteOutcome { label: L::TIE_BREAK, tied: true },
        core::cmp::Ordering::Less => {
            let other = *votes.iter().find(|&&v| v != L::TIE_BREAK).expect("non-empty minority");
            VoteOutcome { label: other, tied: false }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CascadeDecision {
    pub image_id: String,
    pub final_label: FinalLabel,
    pub votes_stage1: Vec<Stage1Label>,
    /// Absent when the gate rejected the image.
    pub votes_stage2: Option<Vec<Stage2Label>>,
    pub tied_stage1: bool,
    pub tied_stage2: bool,
}

/// Rubbish if the stage-1 majority says so; otherwise the stage-2 majority.
/// Stage-2 votes are ignored (and may be absent) for gated images.
pub fn cascade_predict(
    image_id: &str,
    stage1: &[Stage1Label],
    stage2: Option<&[Stage2Label]>,
) -> Result<CascadeDecision> {
    let gate = majority_vote(stage1)?;
    if gate.label == Stage1Label::Rubbish {
        return Ok(CascadeDecision {
            image_id: image_id.into(),
            final_label: FinalLabel::Rubbish,
            votes_stage1: stage1.to_vec(),
            votes_stage2: None,
            tied_stage1: gate.tied,
            tied_stage2: false,
        });
    }
    let stage2 = match stage2 {
        Some(v) if !v.is_empty() => v,
        _ => return Err(Error::MissingStage2Votes(image_id.into())),
    };
    if stage2.len() != stage1.len() {
        return Err(Error::VoteCountMismatch { image: image_id.into(), expected: stage1.len(), found: stage2.len() });
    }
    let second = majority_vote(stage2)?;
    Ok(CascadeDecision {
        image_id: image_id.into(),
        final_label: second.label.into(),
        votes_stage1: stage1.to_vec(),
        votes_stage2: Some(stage2.to_vec()),
        tied_stage1: gate.tied,
        tied_stage2: second.tied,
    })
}

/// Three-class scores `(rubbish, healthy, unhealthy)` from the gate
/// probability and the stage-2 healthy probability. Sums to 1.
pub fn compose_scores(p_rubbish: f64, p_healthy: f64) -> [f64; 3] {
    let rest = 1.0 - p_rubbish;
    [p_rubbish, rest * p_healthy, rest * (1.0 - p_healthy)]
}

/// A cascade decision together with the scores used for ranking metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeOutput {
    pub decision: CascadeDecision,
    pub composed_scores: [f64; 3],
}

pub fn vote_string<L: Copy>(votes: &[L], code: impl Fn(L) -> char) -> String {
    votes.iter().map(|&v| code(v)).collect()
}
