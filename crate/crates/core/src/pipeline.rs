//! Table-level driver: per-fold calibration on validation ids, per-fold test
//! scoring, and cross-fold voting for unlabeled images.
//!
//! A [`Method`] selects which backbones are averaged: every model present
//! for the fold and stage, or a single model on its own.

use core::fmt;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::calibration::{apply_threshold, sweep_threshold, Objective, ThresholdCalibration};
use crate::ensemble::{cascade_predict, compose_scores, mean_into, CascadeOutput};
use crate::error::{Error, Result};
use crate::label::{FinalLabel, RawLabel, Stage, Stage1Label, Stage2Label};
use crate::metrics::FoldMetrics;
use crate::split::FoldAssignment;
use crate::table::{LabelTable, PredictionTable};

/// Stage-2 probability used in composed scores when an image was gated out
/// and no stage-2 prediction exists.
pub const NEUTRAL_HEALTHY: f64 = 0.5;

pub const ENSEMBLE: &str = "ensemble";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    /// Average of every model present for the fold and stage.
    Ensemble,
    Model(String),
}

impl Method {
    pub fn parse(s: &str) -> Self {
        if s == ENSEMBLE {
            Method::Ensemble
        } else {
            Method::Model(s.to_string())
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Method::Ensemble => ENSEMBLE,
            Method::Model(id) => id,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Objectives maximized on validation data, per stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageObjectives {
    /// Positive class is rubbish.
    pub stage1: Objective,
    /// Positive class is healthy.
    pub stage2: Objective,
}

impl Default for StageObjectives {
    fn default() -> Self {
        StageObjectives { stage1: Objective::F1Positive, stage2: Objective::MacroF1 }
    }
}

/// Thresholds of one method, keyed by fold and stage.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Calibrations {
    entries: BTreeMap<(u32, Stage), ThresholdCalibration>,
}

impl Calibrations {
    pub fn insert(&mut self, fold: u32, stage: Stage, cal: ThresholdCalibration) {
        self.entries.insert((fold, stage), cal);
    }

    pub fn get(&self, fold: u32, stage: Stage) -> Result<&ThresholdCalibration> {
        self.entries.get(&(fold, stage)).ok_or(Error::MissingCalibration { fold, stage })
    }

    pub fn folds(&self, stage: Stage) -> Vec<u32> {
        self.entries.keys().filter(|(_, s)| *s == stage).map(|(f, _)| *f).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, Stage, &ThresholdCalibration)> + '_ {
        self.entries.iter().map(|(&(f, s), c)| (f, s, c))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Model indices averaged by `method` for `(fold, stage)`.
pub fn resolve_models(table: &PredictionTable, method: &Method, fold: u32, stage: Stage) -> Result<Vec<usize>> {
    let present = table.models_for(fold, stage);
    let models = match method {
        Method::Ensemble => present,
        Method::Model(id) => {
            let idx = table.model_index(id).ok_or_else(|| Error::UnknownModel(id.clone()))?;
            if present.contains(&idx) {
                alloc::vec![idx]
            } else {
                Vec::new()
            }
        }
    };
    if models.is_empty() {
        return Err(Error::MissingFold { fold, stage });
    }
    Ok(models)
}

/// Averaged probabilities of `models` for one image. `None` when no model
/// has a prediction; an error when only some do.
pub fn fold_score(
    table: &PredictionTable,
    models: &[usize],
    image: usize,
    fold: u32,
    stage: Stage,
) -> Result<Option<[f64; 2]>> {
    let rows: Vec<Option<&[f64]>> = models.iter().map(|&m| table.get(image, m, fold, stage)).collect();
    let present = rows.iter().filter(|r| r.is_some()).count();
    if present == 0 {
        return Ok(None);
    }
    if present < rows.len() {
        let missing = models[rows.iter().position(Option::is_none).unwrap_or(0)];
        return Err(Error::MissingPrediction {
            image: table.images()[image].clone(),
            model: table.models()[missing].clone(),
            fold,
            stage,
        });
    }
    let mut out = [0.0; 2];
    mean_into(rows.into_iter().flatten(), &mut out[..stage.width()]);
    Ok(Some(out))
}

fn required_score(table: &PredictionTable, models: &[usize], id: &str, fold: u32, stage: Stage) -> Result<[f64; 2]> {
    let missing =
        || Error::MissingPrediction { image: id.to_string(), model: table.models()[models[0]].clone(), fold, stage };
    let image = table.image_index(id).ok_or_else(missing)?;
    fold_score(table, models, image, fold, stage)?.ok_or_else(missing)
}

/// Validation probabilities and binary truth for one stage.
///
/// Stage 1 uses every validation image with truth "is rubbish". Stage 2
/// uses validation images labeled healthy or unhealthy with truth "is
/// healthy"; rubbish and both images carry no binary stage-2 truth.
pub fn validation_data(
    table: &PredictionTable,
    labels: &LabelTable,
    assignment: &FoldAssignment,
    method: &Method,
    stage: Stage,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let fold = assignment.fold;
    let models = resolve_models(table, method, fold, stage)?;
    let mut probs = Vec::with_capacity(assignment.val.len());
    let mut truth = Vec::with_capacity(assignment.val.len());
    for id in &assignment.val {
        let label = labels.get(id).ok_or_else(|| Error::MissingLabel(id.clone()))?;
        let target = match (stage, label) {
            (Stage::Stage1, l) => l == RawLabel::Rubbish,
            (Stage::Stage2, RawLabel::Healthy) => true,
            (Stage::Stage2, RawLabel::Unhealthy) => false,
            (Stage::Stage2, _) => continue,
        };
        probs.push(required_score(table, &models, id, fold, stage)?[0]);
        truth.push(target);
    }
    Ok((probs, truth))
}

pub fn calibrate_fold(
    table: &PredictionTable,
    labels: &LabelTable,
    assignment: &FoldAssignment,
    method: &Method,
    stage: Stage,
    objective: Objective,
) -> Result<ThresholdCalibration> {
    let (probs, truth) = validation_data(table, labels, assignment, method, stage)?;
    sweep_threshold(&probs, &truth, objective)
}

/// Both stages of every fold.
pub fn calibrate(
    table: &PredictionTable,
    labels: &LabelTable,
    folds: &[FoldAssignment],
    method: &Method,
    objectives: StageObjectives,
) -> Result<Calibrations> {
    let mut out = Calibrations::default();
    for fa in folds {
        for (stage, objective) in [(Stage::Stage1, objectives.stage1), (Stage::Stage2, objectives.stage2)] {
            out.insert(fa.fold, stage, calibrate_fold(table, labels, fa, method, stage, objective)?);
        }
    }
    Ok(out)
}

/// Per-fold test predictions and the metrics they earn.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldEvaluation {
    pub fold: u32,
    pub image_ids: Vec<String>,
    pub truth: Vec<FinalLabel>,
    pub predicted: Vec<FinalLabel>,
    pub scores: Vec<[f64; 3]>,
    pub metrics: FoldMetrics,
}

/// Single-fold cascade on the fold's test ids, without cross-fold voting.
pub fn evaluate_fold(
    table: &PredictionTable,
    labels: &LabelTable,
    assignment: &FoldAssignment,
    method: &Method,
    calibrations: &Calibrations,
) -> Result<FoldEvaluation> {
    let fold = assignment.fold;
    let gate = calibrations.get(fold, Stage::Stage1)?;
    let second = calibrations.get(fold, Stage::Stage2)?;
    let models1 = resolve_models(table, method, fold, Stage::Stage1)?;
    let models2 = resolve_models(table, method, fold, Stage::Stage2)?;

    let n = assignment.test.len();
    let mut eval = FoldEvaluation {
        fold,
        image_ids: Vec::with_capacity(n),
        truth: Vec::with_capacity(n),
        predicted: Vec::with_capacity(n),
        scores: Vec::with_capacity(n),
        metrics: FoldMetrics::default(),
    };
    for id in &assignment.test {
        let label = labels.get(id).ok_or_else(|| Error::MissingLabel(id.clone()))?;
        let truth = label.final_label().ok_or_else(|| Error::BothInEvaluation(id.clone()))?;
        let p_rubbish = required_score(table, &models1, id, fold, Stage::Stage1)?[0];
        let stage2 = match table.image_index(id) {
            Some(image) => fold_score(table, &models2, image, fold, Stage::Stage2)?,
            None => None,
        };
        let predicted = if apply_threshold(p_rubbish, gate) {
            FinalLabel::Rubbish
        } else {
            let p = stage2.ok_or_else(|| Error::MissingPrediction {
                image: id.clone(),
                model: table.models()[models2[0]].clone(),
                fold,
                stage: Stage::Stage2,
            })?;
            if apply_threshold(p[0], second) {
                FinalLabel::Healthy
            } else {
                FinalLabel::Unhealthy
            }
        };
        let p_healthy = stage2.map_or(NEUTRAL_HEALTHY, |p| p[0]);
        eval.image_ids.push(id.clone());
        eval.truth.push(truth);
        eval.predicted.push(predicted);
        eval.scores.push(compose_scores(p_rubbish, p_healthy));
    }
    eval.metrics = FoldMetrics::compute(&eval.truth, &eval.predicted, &eval.scores)?;
    Ok(eval)
}

/// Cross-fold majority vote over every image in `table`, using the folds
/// that have a stage-1 calibration. Composed scores average each stage's
/// probability over folds. Coverage gaps are collected for all images
/// before failing.
pub fn predict_external(
    table: &PredictionTable,
    method: &Method,
    calibrations: &Calibrations,
) -> Result<Vec<CascadeOutput>> {
    let folds = calibrations.folds(Stage::Stage1);
    if folds.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut plan = Vec::with_capacity(folds.len());
    for &fold in &folds {
        let gate = *calibrations.get(fold, Stage::Stage1)?;
        let second = *calibrations.get(fold, Stage::Stage2)?;
        let models1 = resolve_models(table, method, fold, Stage::Stage1)?;
        let models2 = resolve_models(table, method, fold, Stage::Stage2).unwrap_or_default();
        plan.push((fold, gate, second, models1, models2));
    }

    let mut outputs = Vec::with_capacity(table.images().len());
    let mut gaps = Vec::new();
    for (image, id) in table.images().iter().enumerate() {
        let mut votes1 = Vec::with_capacity(plan.len());
        let mut sum_rubbish = 0.0;
        for (fold, gate, _, models1, _) in &plan {
            match fold_score(table, models1, image, *fold, Stage::Stage1) {
                Ok(Some(p)) => {
                    sum_rubbish += p[0];
                    votes1.push(if apply_threshold(p[0], gate) { Stage1Label::Rubbish } else { Stage1Label::Suitable });
                }
                Ok(None) | Err(_) => gaps.push(format!("{id}: fold {fold} / stage1")),
            }
        }
        if votes1.len() != plan.len() {
            continue;
        }

        let mut votes2 = Vec::with_capacity(plan.len());
        let mut sum_healthy = 0.0;
        let mut stage2_gaps = Vec::new();
        for (fold, _, second, _, models2) in &plan {
            let score =
                if models2.is_empty() { Ok(None) } else { fold_score(table, models2, image, *fold, Stage::Stage2) };
            match score {
                Ok(Some(p)) => {
                    sum_healthy += p[0];
                    votes2.push(if apply_threshold(p[0], second) {
                        Stage2Label::Healthy
                    } else {
                        Stage2Label::Unhealthy
                    });
                }
                Ok(None) | Err(_) => stage2_gaps.push(format!("{id}: fold {fold} / stage2")),
            }
        }
        let complete2 = stage2_gaps.is_empty();
        let decision = match cascade_predict(id, &votes1, complete2.then_some(votes2.as_slice())) {
            Ok(d) => d,
            Err(Error::MissingStage2Votes(_)) => {
                gaps.extend(stage2_gaps);
                continue;
            }
            Err(e) => return Err(e),
        };
        let k = plan.len() as f64;
        let p_healthy = if complete2 { sum_healthy / k } else { NEUTRAL_HEALTHY };
        outputs.push(CascadeOutput { decision, composed_scores: compose_scores(sum_rubbish / k, p_healthy) });
    }
    if !gaps.is_empty() {
        return Err(Error::IncompleteCoverage(gaps));
    }
    Ok(outputs)
}

/// Calibrate on validation, then score every fold's test ids.
pub fn evaluate_method(
    table: &PredictionTable,
    labels: &LabelTable,
    folds: &[FoldAssignment],
    method: &Method,
    objectives: StageObjectives,
) -> Result<Vec<FoldEvaluation>> {
    let calibrations = calibrate(table, labels, folds, method, objectives)?;
    folds.iter().map(|fa| evaluate_fold(table, labels, fa, method, &calibrations)).collect()
}
