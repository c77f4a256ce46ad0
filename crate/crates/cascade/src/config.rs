//! Run configuration shared by every subcommand.
//!
//! Each field may come from a flag, a JSON config file, or a built-in
//! default, in that order of precedence. The resolved values are written
//! to `run_config.json` in the output directory, which can be passed back
//! through `--config` to repeat the run.

use std::path::{Path, PathBuf};

use anyhow::Context;
use cascade_core::pipeline::StageObjectives;
use cascade_core::synthetic::SyntheticConfig;
use cascade_core::{Objective, SplitRatios};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const RUN_CONFIG_FILE: &str = "run_config.json";
pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_SEED: u64 = 0;

/// Bad or missing arguments; the binary exits with status 2.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Stage-1 threshold objective. The rubbish class is positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage1Objective {
    #[default]
    F1Rubbish,
    F1Suitable,
    MacroF1,
}

impl From<Stage1Objective> for Objective {
    fn from(o: Stage1Objective) -> Self {
        match o {
            Stage1Objective::F1Rubbish => Objective::F1Positive,
            Stage1Objective::F1Suitable => Objective::F1Negative,
            Stage1Objective::MacroF1 => Objective::MacroF1,
        }
    }
}

/// Stage-2 threshold objective. The healthy class is positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage2Objective {
    #[default]
    MacroF1,
    F1Healthy,
    F1Unhealthy,
}

impl From<Stage2Objective> for Objective {
    fn from(o: Stage2Objective) -> Self {
        match o {
            Stage2Objective::MacroF1 => Objective::MacroF1,
            Stage2Objective::F1Healthy => Objective::F1Positive,
            Stage2Objective::F1Unhealthy => Objective::F1Negative,
        }
    }
}

/// Generator settings; unset fields fall back to [`SyntheticConfig`]
/// defaults or to the top-level `seed` and `folds`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_images: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_priors: Option<[f64; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_models: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_skill: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inter_model_correlation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
}

pub const DEFAULT_IMAGES: usize = 1000;
pub const DEFAULT_MODELS: usize = 5;
pub const DEFAULT_SKILL: f64 = 0.6;
pub const DEFAULT_CORRELATION: f64 = 0.5;
pub const DEFAULT_REPLICATIONS: usize = 50;

impl SynthSettings {
    fn or(self, other: SynthSettings) -> SynthSettings {
        SynthSettings {
            n_images: self.n_images.or(other.n_images),
            class_priors: self.class_priors.or(other.class_priors),
            n_models: self.n_models.or(other.n_models),
            model_skill: self.model_skill.or(other.model_skill),
            inter_model_correlation: self.inter_model_correlation.or(other.inter_model_correlation),
            replications: self.replications.or(other.replications),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predictions: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub splits: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub groups: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub folds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratios: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage1_objective: Option<Stage1Objective>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage2_objective: Option<Stage2Objective>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    /// Never persisted: outputs do not depend on it.
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SynthSettings>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }

    /// Field-wise: values set here win over `fallback`.
    pub fn or(self, fallback: RunConfig) -> RunConfig {
        let synthetic = match (self.synthetic, fallback.synthetic) {
            (Some(a), Some(b)) => Some(a.or(b)),
            (a, b) => a.or(b),
        };
        RunConfig {
            command: self.command.or(fallback.command),
            labels: self.labels.or(fallback.labels),
            predictions: self.predictions.or(fallback.predictions),
            splits: self.splits.or(fallback.splits),
            thresholds: self.thresholds.or(fallback.thresholds),
            groups: self.groups.or(fallback.groups),
            out: self.out.or(fallback.out),
            seed: self.seed.or(fallback.seed),
            folds: self.folds.or(fallback.folds),
            ratios: self.ratios.or(fallback.ratios),
            stage1_objective: self.stage1_objective.or(fallback.stage1_objective),
            stage2_objective: self.stage2_objective.or(fallback.stage2_objective),
            method: self.method.or(fallback.method),
            threads: self.threads.or(fallback.threads),
            synthetic,
        }
    }

    pub fn require<'a>(field: &'a Option<PathBuf>, flag: &str) -> anyhow::Result<&'a Path> {
        field.as_deref().ok_or_else(|| usage(format!("--{flag} is required (flag or config file)")))
    }

    pub fn seed_or_default(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn split_ratios(&self) -> anyhow::Result<SplitRatios> {
        match self.ratios {
            None => Ok(SplitRatios::DEFAULT),
            Some([a, b, c]) => SplitRatios::new(a, b, c).map_err(|e| usage(e.to_string())),
        }
    }

    pub fn objectives(&self) -> StageObjectives {
        StageObjectives {
            stage1: self.stage1_objective.unwrap_or_default().into(),
            stage2: self.stage2_objective.unwrap_or_default().into(),
        }
    }

    /// Generator config with every default filled in.
    pub fn synthetic_config(&self) -> anyhow::Result<SyntheticConfig> {
        let s = self.synthetic.clone().unwrap_or_default();
        let n_models = s.n_models.or(s.model_skill.as_ref().map(Vec::len)).unwrap_or(DEFAULT_MODELS);
        let base = SyntheticConfig::new(
            s.n_images.unwrap_or(DEFAULT_IMAGES),
            n_models,
            self.folds.unwrap_or(DEFAULT_FOLDS),
            DEFAULT_SKILL,
            s.inter_model_correlation.unwrap_or(DEFAULT_CORRELATION),
            self.seed_or_default(),
        );
        let config = SyntheticConfig {
            class_priors: s.class_priors.unwrap_or(base.class_priors),
            model_skill: s.model_skill.unwrap_or(base.model_skill.clone()),
            ..base
        };
        config.validate()?;
        Ok(config)
    }

    /// `self` with the generator section replaced by fully resolved values.
    pub fn with_synthetic(mut self, config: &SyntheticConfig) -> RunConfig {
        let replications = self.synthetic.as_ref().and_then(|s| s.replications);
        self.synthetic = Some(SynthSettings {
            n_images: Some(config.n_images),
            class_priors: Some(config.class_priors),
            n_models: Some(config.n_models),
            model_skill: Some(config.model_skill.clone()),
            inter_model_correlation: Some(config.inter_model_correlation),
            replications,
        });
        self.folds = Some(config.n_folds);
        self.seed = Some(config.seed);
        self
    }

    pub fn save(&self, dir: &Path) -> anyhow::Result<()> {
        crate::io::write_json(&dir.join(RUN_CONFIG_FILE), self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let flags = RunConfig { seed: Some(3), ..Default::default() };
        let file = RunConfig { seed: Some(9), folds: Some(4), ..Default::default() };
        let merged = flags.or(file);
        assert_eq!((merged.seed, merged.folds), (Some(3), Some(4)));
        assert_eq!(RunConfig::default().seed_or_default(), DEFAULT_SEED);
    }

    #[test]
    fn synthetic_sections_merge_fieldwise() {
        let flags = RunConfig {
            synthetic: Some(SynthSettings { n_images: Some(10), ..Default::default() }),
            ..Default::default()
        };
        let file = RunConfig {
            synthetic: Some(SynthSettings { n_images: Some(99), n_models: Some(2), ..Default::default() }),
            ..Default::default()
        };
        let c = flags.or(file).synthetic_config().unwrap();
        assert_eq!((c.n_images, c.n_models, c.model_skill.len()), (10, 2, 2));
    }

    #[test]
    fn threads_are_not_persisted() {
        let c = RunConfig { threads: Some(8), seed: Some(1), ..Default::default() };
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(text, r#"{"seed":1}"#);
        let back: RunConfig = serde_json::from_str(r#"{"seed":1,"threads":2}"#).unwrap();
        assert_eq!(back.threads, Some(2));
    }

    #[test]
    fn objective_names() {
        let c: RunConfig = serde_json::from_str(r#"{"stage1_objective":"f1-suitable"}"#).unwrap();
        assert_eq!(c.objectives().stage1, Objective::F1Negative);
        assert_eq!(c.objectives().stage2, Objective::MacroF1);
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed":1}"#).is_err());
    }

    #[test]
    fn invalid_generator_settings_name_the_field() {
        let c = RunConfig {
            synthetic: Some(SynthSettings { class_priors: Some([0.5, 0.5, 0.5, 0.0]), ..Default::default() }),
            ..Default::default()
        };
        assert!(c.synthetic_config().unwrap_err().to_string().contains("class_priors"));
    }
}
