//! Two-stage cascaded ensemble decisions for rubbish / healthy / unhealthy
//! cell-patch classification.
//!
//! Stage 1 gates out patches unsuitable for diagnosis; stage 2 decides
//! healthy versus unhealthy for the survivors. Within a fold, backbone
//! probabilities are averaged and a validation-calibrated threshold turns
//! them into a decision. Across folds, decisions are combined by majority
//! vote.
//!
//! The crate is `no_std` (with `alloc`) so the numerical core can be embedded
//! anywhere; file formats, threading and the command line live in the
//! `cascade` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod calibration;
pub mod ensemble;
mod error;
pub mod label;
pub mod metrics;
pub mod pipeline;
pub mod split;
pub mod synthetic;
pub mod table;

pub use crate::calibration::{apply_threshold, sweep_threshold, Objective, ThresholdCalibration};
pub use crate::ensemble::{
    cascade_predict, compose_scores, ensemble_average, majority_vote, CascadeDecision, CascadeOutput, FoldEnsembleScore,
};
pub use crate::error::{Error, Result};
pub use crate::label::{FinalLabel, RawLabel, Stage, Stage1Label, Stage2Label, Stage2Target};
pub use crate::metrics::{AggregateMetrics, ConfusionMatrix, FoldMetrics, MetricSummary};
pub use crate::pipeline::{Calibrations, FoldEvaluation, Method, StageObjectives};
pub use crate::split::{class_weights, stratified_kfold_split, FoldAssignment, SplitRatios, Subset};
pub use crate::table::{logits_to_probabilities, sigmoid, LabelTable, PredictionRecord, PredictionTable};
