//! Simulated labels and backbone outputs.
//!
//! Each model's logit for a binary target `y ∈ {-1, +1}` is
//! `scale * (skill * y + (1 - skill) * noise)` where
//! `noise = sqrt(rho) * shared + sqrt(1 - rho) * own`. The shared draw is
//! common to all models and folds for that image and head, so `rho` is the
//! inter-model noise correlation. Skill 0 yields scores independent of the
//! truth; skill 1 yields perfectly separated scores.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{map_stage2_target, RawLabel, Stage};
use crate::metrics::{summarize, MetricSummary};
use crate::pipeline::{evaluate_method, Method, StageObjectives};
use crate::split::{stratified_kfold_split, SplitRatios};
use crate::table::{sigmoid, LabelTable, PredictionTable, PredictionTableBuilder};

/// Logit magnitude of a perfectly skilled model.
pub const LOGIT_SCALE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_images: usize,
    /// Rubbish, healthy, unhealthy, both.
    #[serde(default = "SyntheticConfig::default_priors")]
    pub class_priors: [f64; 4],
    pub n_models: usize,
    pub n_folds: usize,
    /// One entry per model, each in `[0, 1]`.
    pub model_skill: Vec<f64>,
    #[serde(default)]
    pub inter_model_correlation: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticConfig {
    /// Imbalanced default shaped like the real data: unhealthy cells are rare.
    pub const DEFAULT_PRIORS: [f64; 4] = [0.45, 0.44, 0.09, 0.02];

    fn default_priors() -> [f64; 4] {
        Self::DEFAULT_PRIORS
    }

    pub fn new(n_images: usize, n_models: usize, n_folds: usize, skill: f64, correlation: f64, seed: u64) -> Self {
        SyntheticConfig {
            n_images,
            class_priors: Self::DEFAULT_PRIORS,
            n_models,
            n_folds,
            model_skill: alloc::vec![skill; n_models],
            inter_model_correlation: correlation,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |field, reason: String| Err(Error::InvalidConfig { field, reason });
        if self.n_images == 0 {
            return invalid("n_images", "must be at least 1".into());
        }
        if self.class_priors.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return invalid("class_priors", "must be non-negative".into());
        }
        let sum: f64 = self.class_priors.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return invalid("class_priors", format!("sum to {sum}, expected 1"));
        }
        if self.n_models == 0 {
            return invalid("n_models", "must be at least 1".into());
        }
        if self.n_folds == 0 {
            return invalid("n_folds", "must be at least 1".into());
        }
        if self.model_skill.len() != self.n_models {
            return invalid(
                "model_skill",
                format!("has {} entries for {} models", self.model_skill.len(), self.n_models),
            );
        }
        if self.model_skill.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return invalid("model_skill", "entries must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.inter_model_correlation) {
            return invalid("inter_model_correlation", "must lie in [0, 1]".into());
        }
        Ok(())
    }

    pub fn model_id(&self, model: usize) -> String {
        let width = digits(self.n_models);
        format!("model_{:0width$}", model + 1)
    }

    pub fn image_id(&self, image: usize) -> String {
        let width = digits(self.n_images);
        format!("img_{:0width$}", image + 1)
    }
}

fn digits(n: usize) -> usize {
    let mut d = 1;
    let mut v = n / 10;
    while v > 0 {
        d += 1;
        v /= 10;
    }
    d
}

fn draw_label<R: Rng>(priors: &[f64; 4], rng: &mut R) -> RawLabel {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (label, p) in RawLabel::ALL.iter().zip(priors) {
        acc += p;
        if u < acc {
            return *label;
        }
    }
    // rounding slack at the top end: last class with positive prior
    RawLabel::ALL.iter().zip(priors).rev().find(|(_, p)| **p > 0.0).map_or(RawLabel::Rubbish, |(l, _)| *l)
}

fn sign(flag: bool) -> f64 {
    if flag {
        1.0
    } else {
        -1.0
    }
}

/// Labels plus stage-1 and stage-2 predictions of every model in every fold
/// for every image. Deterministic in the config.
pub fn generate(config: &SyntheticConfig) -> Result<(LabelTable, PredictionTable)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let shared_w = libm::sqrt(config.inter_model_correlation);
    let own_w = libm::sqrt(1.0 - config.inter_model_correlation);

    let mut builder = PredictionTableBuilder::default();
    let models: Vec<usize> = (0..config.n_models).map(|m| builder.intern_model(&config.model_id(m))).collect();
    let mut labels = Vec::with_capacity(config.n_images);

    for i in 0..config.n_images {
        let id = config.image_id(i);
        let label = draw_label(&config.class_priors, &mut rng);
        let image = builder.intern_image(&id);
        labels.push((id, label));

        // signed targets for the rubbish, healthy and unhealthy heads;
        // stage-2 heads carry no signal on rubbish images
        let targets = match map_stage2_target(label) {
            Ok(t) => [-1.0, sign(t.healthy), sign(t.unhealthy)],
            Err(_) => [1.0, 0.0, 0.0],
        };
        let shared: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];

        for fold in 1..=config.n_folds as u32 {
            for (&model, &skill) in models.iter().zip(&config.model_skill) {
                let mut p = [0.0; 3];
                for head in 0..3 {
                    let own: f64 = rng.sample(StandardNormal);
                    let noise = shared_w * shared[head] + own_w * own;
                    p[head] = sigmoid(LOGIT_SCALE * (skill * targets[head] + (1.0 - skill) * noise));
                }
                builder.insert(image, model, fold, Stage::Stage1, &p[..1])?;
                builder.insert(image, model, fold, Stage::Stage2, &p[1..])?;
            }
        }
    }
    Ok((LabelTable::from_pairs(labels)?, builder.build()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSummary {
    /// Per replication: fold-mean macro F1 of the averaged ensemble.
    pub ensemble_f1: Vec<f64>,
    /// Per model, per replication: fold-mean macro F1 of the model alone.
    pub model_f1: Vec<Vec<f64>>,
    /// Model with the highest mean macro F1 across replications.
    pub best_model: usize,
    /// Per replication: ensemble minus best model.
    pub gains: Vec<f64>,
    pub gain: MetricSummary,
    /// One-sided 95% percentile-bootstrap lower bound of the mean gain.
    pub gain_lower_95: f64,
}

pub const BOOTSTRAP_RESAMPLES: usize = 10_000;

/// Mean of `values` resampled with replacement; returns the `alpha` quantile.
pub fn bootstrap_lower_bound(values: &[f64], alpha: f64, resamples: usize, seed: u64) -> Result<f64> {
    if values.is_empty() || resamples == 0 {
        return Err(Error::EmptyInput);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = values.len();
    let mut means: Vec<f64> =
        (0..resamples).map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64).collect();
    means.sort_by(f64::total_cmp);
    let idx = libm::floor(alpha * resamples as f64) as usize;
    Ok(means[idx.min(resamples - 1)])
}

/// Runs the full per-fold pipeline for every model alone and for their
/// average, over `replications` independent synthetic datasets seeded with
/// `seed ^ replication`.
pub fn ensemble_gain_experiment(config: &SyntheticConfig, replications: usize) -> Result<GainSummary> {
    config.validate()?;
    if replications < 2 {
        return Err(Error::InvalidConfig { field: "replications", reason: "must be at least 2".into() });
    }
    let objectives = StageObjectives::default();
    let mut ensemble_f1 = Vec::with_capacity(replications);
    let mut model_f1 = alloc::vec![Vec::with_capacity(replications); config.n_models];

    for r in 0..replications {
        let rep = SyntheticConfig { seed: config.seed ^ r as u64, ..config.clone() };
        let (labels, table) = generate(&rep)?;
        let folds = stratified_kfold_split(&labels, config.n_folds, SplitRatios::DEFAULT, rep.seed)?;
        let mean_f1 = |method: &Method| -> Result<f64> {
            let evals = evaluate_method(&table, &labels, &folds, method, objectives)?;
            Ok(evals.iter().map(|e| e.metrics.macro_f1).sum::<f64>() / evals.len() as f64)
        };
        ensemble_f1.push(mean_f1(&Method::Ensemble)?);
        for (m, scores) in model_f1.iter_mut().enumerate() {
            scores.push(mean_f1(&Method::Model(rep.model_id(m)))?);
        }
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let best_model = (0..config.n_models)
        .max_by(|&a, &b| mean(&model_f1[a]).total_cmp(&mean(&model_f1[b])).then(b.cmp(&a)))
        .unwrap_or(0);
    let gains: Vec<f64> = ensemble_f1.iter().zip(&model_f1[best_model]).map(|(e, b)| e - b).collect();
    let gain = summarize(&gains)?;
    let gain_lower_95 = bootstrap_lower_bound(&gains, 0.05, BOOTSTRAP_RESAMPLES, config.seed)?;
    Ok(GainSummary { ensemble_f1, model_f1, best_model, gains, gain, gain_lower_95 })
}
