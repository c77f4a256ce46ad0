use alloc::string::String;

use crate::label::{FinalLabel, Stage};

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("stage-2 target is undefined for rubbish images")]
    RubbishHasNoStage2Target,
    #[error("non-finite logit {0}")]
    NonFiniteLogit(f64),
    #[error("probability {0} is outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("{stage} record expects {expected} probabilities, found {found}")]
    WrongArity { stage: Stage, expected: usize, found: usize },
    #[error("duplicate prediction for image {image}, model {model}, fold {fold}, {stage}")]
    DuplicatePrediction { image: String, model: String, fold: u32, stage: Stage },
    #[error("fold ids start at 1, got {0}")]
    InvalidFoldId(u32),
    #[error("label table is empty")]
    EmptyLabels,
    #[error("duplicate label for image {0}")]
    DuplicateLabel(String),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("unknown stage {0:?}")]
    UnknownStage(String),
    #[error("k-fold split needs k >= 2, got {0}")]
    InvalidFoldCount(usize),
    #[error("split ratios must be positive and sum to 1, got ({0}, {1}, {2})")]
    InvalidRatios(f64, f64, f64),
    #[error("class {label} has {count} members, fewer than k = {k}")]
    TooFewMembers { label: String, count: usize, k: usize },
    #[error("class {0} has zero count")]
    ZeroCount(String),
    #[error("input is empty")]
    EmptyInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("both classes must be present")]
    SingleClass,
    #[error("class {0} is absent from the ground truth")]
    MissingClass(FinalLabel),
    #[error("aggregation needs at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("records do not share the same (image, fold, stage) key")]
    MixedKeys,
    #[error("image {0} passed stage 1 but has no stage-2 votes")]
    MissingStage2Votes(String),
    #[error("image {image}: expected {expected} fold votes, found {found}")]
    VoteCountMismatch { image: String, expected: usize, found: usize },
    #[error("no calibration for fold {fold} / {stage}")]
    MissingCalibration { fold: u32, stage: Stage },
    #[error("no predictions for fold {fold} / {stage}")]
    MissingFold { fold: u32, stage: Stage },
    #[error("missing prediction for image {image}, model {model}, fold {fold}, {stage}")]
    MissingPrediction { image: String, model: String, fold: u32, stage: Stage },
    #[error("incomplete fold coverage: {}", .0.join("; "))]
    IncompleteCoverage(alloc::vec::Vec<String>),
    #[error("image {0} has no label")]
    MissingLabel(String),
    #[error("image {0} is labeled both, which is never evaluated")]
    BothInEvaluation(String),
    #[error("unknown model {0}")]
    UnknownModel(String),
    #[error("invalid config field {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
}
