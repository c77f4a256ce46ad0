//! Subcommand bodies. Each takes a merged [`RunConfig`], writes its
//! artifacts plus `run_config.json` into the output directory and returns
//! the resolved config.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use cascade_core::metrics::FoldMetrics;
use cascade_core::pipeline::{calibrate, evaluate_fold, predict_external, Calibrations, Method, ENSEMBLE};
use cascade_core::split::stratified_group_kfold_split;
use cascade_core::synthetic::{ensemble_gain_experiment, generate};
use cascade_core::{
    class_weights, stratified_kfold_split, FinalLabel, FoldAssignment, LabelTable, PredictionTable, RawLabel, Stage,
    Subset,
};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{usage, RunConfig, DEFAULT_REPLICATIONS};
use crate::io::{self, create_with};
use crate::report::{self, MethodReport, Report, ENSEMBLE_ROW, RANDOM_PREDICTION};

pub const SPLITS_FILE: &str = "splits.csv";
pub const THRESHOLDS_FILE: &str = "thresholds.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const FINAL_FILE: &str = "predictions_final.csv";
pub const VOTED_METRICS_FILE: &str = "voted_metrics.json";
pub const LABELS_FILE: &str = "labels.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const GAIN_FILE: &str = "gain.json";
pub const CLASS_WEIGHTS_FILE: &str = "class_weights.json";

fn out_dir(cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    let dir = RunConfig::require(&cfg.out, "out")?;
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir.to_path_buf())
}

/// Runs `f` on a pool of `threads` workers (0 or unset: one per core).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.unwrap_or(0)).build()?;
    Ok(pool.install(f))
}

fn load_groups(path: &Path) -> anyhow::Result<BTreeMap<String, String>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(io::open(path)?);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != ["image_id", "group"] {
        bail!("{}: unexpected header `{}`, expected `image_id,group`", path.display(), header.join(","));
    }
    let mut groups = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        groups.insert(record[0].to_string(), record[1].to_string());
    }
    Ok(groups)
}

/// Per-class counts in each subset, one line per fold.
pub fn split_summary(labels: &LabelTable, folds: &[FoldAssignment]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>4}  {:>6}  {:>8} {:>8} {:>9} {:>5}",
        "fold", "subset", "rubbish", "healthy", "unhealthy", "both"
    );
    for fa in folds {
        for subset in Subset::ALL {
            let mut counts = [0usize; 4];
            for id in fa.subset(subset) {
                if let Some(label) = labels.get(id) {
                    counts[label.index()] += 1;
                }
            }
            let _ = writeln!(
                out,
                "{:>4}  {:>6}  {:>8} {:>8} {:>9} {:>5}",
                fa.fold,
                subset.as_str(),
                counts[0],
                counts[1],
                counts[2],
                counts[3]
            );
        }
    }
    out
}

pub fn cmd_split(cfg: RunConfig) -> anyhow::Result<RunConfig> {
    let labels = io::load_labels(RunConfig::require(&cfg.labels, "labels")?)?;
    let k = cfg.folds.unwrap_or(crate::config::DEFAULT_FOLDS);
    if k < 2 {
        return Err(usage(format!("--folds must be at least 2, got {k}")));
    }
    let ratios = cfg.split_ratios()?;
    let seed = cfg.seed_or_default();
    let folds = match &cfg.groups {
        Some(path) => stratified_group_kfold_split(&labels, &load_groups(path)?, k, ratios, seed)?,
        None => stratified_kfold_split(&labels, k, ratios, seed)?,
    };
    let dir = out_dir(&cfg)?;
    create_with(&dir.join(SPLITS_FILE), |w| Ok(io::write_splits(&folds, w)?))?;
    io::write_json(&dir.join(CLASS_WEIGHTS_FILE), &fold_class_weights(&labels, &folds)?)?;
    print!("{}", split_summary(&labels, &folds));
    let resolved = RunConfig {
        command: Some("split".into()),
        folds: Some(k),
        seed: Some(seed),
        ratios: Some([ratios.train, ratios.val, ratios.test]),
        ..cfg
    };
    resolved.save(&dir)?;
    Ok(resolved)
}

#[derive(Debug, Serialize)]
pub struct FoldWeights {
    pub fold: u32,
    /// `rubbish` vs `suitable` over the training subset.
    pub stage1: BTreeMap<String, f64>,
    /// `healthy` vs `unhealthy` over training images carrying one of those labels.
    pub stage2: BTreeMap<String, f64>,
}

/// Balanced loss weights for both heads, from each fold's training subset.
/// A class absent from a fold's training data is left out of that map.
pub fn fold_class_weights(labels: &LabelTable, folds: &[FoldAssignment]) -> anyhow::Result<Vec<FoldWeights>> {
    let weights = |counts: BTreeMap<String, u64>| -> anyhow::Result<BTreeMap<String, f64>> {
        let present: BTreeMap<String, u64> = counts.into_iter().filter(|(_, n)| *n > 0).collect();
        if present.is_empty() {
            return Ok(BTreeMap::new());
        }
        Ok(class_weights(&present)?)
    };
    folds
        .iter()
        .map(|fa| {
            let mut s1 = BTreeMap::from([("rubbish".to_string(), 0u64), ("suitable".to_string(), 0)]);
            let mut s2 = BTreeMap::from([("healthy".to_string(), 0u64), ("unhealthy".to_string(), 0)]);
            for id in &fa.train {
                let label = labels.get(id).with_context(|| format!("split references unknown image {id}"))?;
                let key = if label == RawLabel::Rubbish { "rubbish" } else { "suitable" };
                *s1.get_mut(key).unwrap() += 1;
                if matches!(label, RawLabel::Healthy | RawLabel::Unhealthy) {
                    *s2.get_mut(label.as_str()).unwrap() += 1;
                }
            }
            Ok(FoldWeights { fold: fa.fold, stage1: weights(s1)?, stage2: weights(s2)? })
        })
        .collect()
}

/// Every (fold, stage) that calibration needs, checked for every model at
/// once so the error lists all gaps.
pub fn coverage_gaps(table: &PredictionTable, labels: &LabelTable, folds: &[FoldAssignment]) -> Vec<String> {
    let mut gaps = Vec::new();
    for fa in folds {
        for stage in Stage::ALL {
            let tag = format!("fold {} / {}", fa.fold, stage);
            let present = table.models_for(fa.fold, stage);
            if present.is_empty() {
                gaps.push(format!("{tag}: no predictions"));
                continue;
            }
            for (m, model) in table.models().iter().enumerate() {
                if !present.contains(&m) {
                    gaps.push(format!("{tag}: no predictions from {model}"));
                }
            }
            let needed = fa.val.iter().filter(|id| {
                stage == Stage::Stage1 || matches!(labels.get(id), Some(RawLabel::Healthy | RawLabel::Unhealthy))
            });
            let mut missing = needed.filter(|id| match table.image_index(id) {
                None => true,
                Some(image) => present.iter().any(|&m| table.get(image, m, fa.fold, stage).is_none()),
            });
            if let Some(first) = missing.next() {
                let n = 1 + missing.count();
                gaps.push(format!("{tag}: {n} validation images lack predictions (first {first})"));
            }
        }
    }
    gaps
}

/// The ensemble followed by each model in id order.
pub fn methods_of(table: &PredictionTable) -> Vec<Method> {
    std::iter::once(Method::Ensemble).chain(table.models().iter().map(|m| Method::Model(m.clone()))).collect()
}

pub fn cmd_calibrate(cfg: RunConfig) -> anyhow::Result<RunConfig> {
    let table = io::load_predictions(RunConfig::require(&cfg.predictions, "predictions")?)?;
    let labels = io::load_labels(RunConfig::require(&cfg.labels, "labels")?)?;
    let folds = io::load_splits(RunConfig::require(&cfg.splits, "splits")?)?;
    if table.models().iter().any(|m| m == ENSEMBLE) {
        bail!("model id `{ENSEMBLE}` is reserved");
    }
    let gaps = coverage_gaps(&table, &labels, &folds);
    if !gaps.is_empty() {
        bail!("incomplete fold coverage:\n  {}", gaps.join("\n  "));
    }
    let objectives = cfg.objectives();
    let methods = methods_of(&table);
    let results: Vec<cascade_core::Result<Calibrations>> = with_threads(cfg.threads, || {
        methods.par_iter().map(|m| calibrate(&table, &labels, &folds, m, objectives)).collect()
    })?;
    let mut entries = Vec::new();
    for (method, cals) in methods.iter().zip(results) {
        let cals = cals.with_context(|| format!("calibrating {method}"))?;
        entries.extend(io::threshold_entries(method, &cals));
    }
    info!("{} thresholds for {} methods over {} folds", entries.len(), methods.len(), folds.len());
    let dir = out_dir(&cfg)?;
    io::write_json(&dir.join(THRESHOLDS_FILE), &entries)?;
    let resolved = RunConfig {
        command: Some("calibrate".into()),
        stage1_objective: Some(cfg.stage1_objective.unwrap_or_default()),
        stage2_objective: Some(cfg.stage2_objective.unwrap_or_default()),
        ..cfg
    };
    resolved.save(&dir)?;
    Ok(resolved)
}

pub fn build_report(
    table: &PredictionTable,
    labels: &LabelTable,
    folds: &[FoldAssignment],
    by_method: &BTreeMap<Method, Calibrations>,
    seed: u64,
) -> anyhow::Result<Report> {
    if folds.is_empty() {
        bail!("splits hold no folds");
    }
    let ensemble = by_method.get(&Method::Ensemble).context("thresholds hold no ensemble calibration")?;
    let mut methods: Vec<(&Method, &Calibrations)> =
        by_method.iter().filter(|(m, _)| **m != Method::Ensemble).collect();
    methods.push((&Method::Ensemble, ensemble));

    let jobs: Vec<(usize, &FoldAssignment)> =
        (0..methods.len()).flat_map(|i| folds.iter().map(move |fa| (i, fa))).collect();
    let evals: Vec<_> = jobs
        .par_iter()
        .map(|&(i, fa)| {
            let (method, cals) = methods[i];
            evaluate_fold(table, labels, fa, method, cals).with_context(|| format!("evaluating {method}"))
        })
        .collect::<anyhow::Result<_>>()?;
    let per_method: Vec<&[cascade_core::FoldEvaluation]> = evals.chunks(folds.len()).collect();

    let ensemble_evals = per_method.last().copied().unwrap_or_default();
    let truths: Vec<(u32, &[FinalLabel])> = ensemble_evals.iter().map(|e| (e.fold, e.truth.as_slice())).collect();
    let mut rows = vec![MethodReport::new(RANDOM_PREDICTION, report::random_rows(&truths, seed)?)];
    for ((method, _), evals) in methods.iter().zip(&per_method) {
        let name = if **method == Method::Ensemble { ENSEMBLE_ROW } else { method.name() };
        rows.push(MethodReport::from_evaluations(name, evals));
    }
    if folds.len() < 2 {
        warn!("fewer than 2 folds: no aggregate rows");
    }
    Ok(Report { methods: rows })
}

pub fn cmd_evaluate(cfg: RunConfig) -> anyhow::Result<RunConfig> {
    let table = io::load_predictions(RunConfig::require(&cfg.predictions, "predictions")?)?;
    let labels = io::load_labels(RunConfig::require(&cfg.labels, "labels")?)?;
    let folds = io::load_splits(RunConfig::require(&cfg.splits, "splits")?)?;
    let entries = io::load_thresholds(RunConfig::require(&cfg.thresholds, "thresholds")?)?;
    let by_method = io::calibrations_by_method(&entries)?;
    let seed = cfg.seed_or_default();
    let report = with_threads(cfg.threads, || build_report(&table, &labels, &folds, &by_method, seed))??;
    let dir = out_dir(&cfg)?;
    io::write_json(&dir.join(REPORT_JSON), &report)?;
    create_with(&dir.join(REPORT_CSV), |w| Ok(report::write_csv(&report, w)?))?;
    print!("{}", report::summary_table(&report));
    let resolved = RunConfig { command: Some("evaluate".into()), seed: Some(seed), ..cfg };
    resolved.save(&dir)?;
    Ok(resolved)
}

pub fn cmd_predict(cfg: RunConfig) -> anyhow::Result<RunConfig> {
    let table = io::load_predictions(RunConfig::require(&cfg.predictions, "predictions")?)?;
    let entries = io::load_thresholds(RunConfig::require(&cfg.thresholds, "thresholds")?)?;
    let method = Method::parse(cfg.method.as_deref().unwrap_or(ENSEMBLE));
    let mut by_method = io::calibrations_by_method(&entries)?;
    let cals = by_method.remove(&method).with_context(|| format!("thresholds hold no calibration for {method}"))?;
    let outputs = predict_external(&table, &method, &cals).map_err(|e| match e {
        cascade_core::Error::IncompleteCoverage(gaps) => {
            anyhow::anyhow!("incomplete fold coverage:\n  {}", gaps.join("\n  "))
        }
        other => other.into(),
    })?;
    let dir = out_dir(&cfg)?;
    create_with(&dir.join(FINAL_FILE), |w| Ok(io::write_final_predictions(&outputs, w)?))?;

    if let Some(path) = &cfg.labels {
        let labels = io::load_labels(path)?;
        let (mut truth, mut pred, mut scores) = (Vec::new(), Vec::new(), Vec::new());
        for o in &outputs {
            if let Some(t) = labels.get(&o.decision.image_id).and_then(|l| l.final_label()) {
                truth.push(t);
                pred.push(o.decision.final_label);
                scores.push(o.composed_scores);
            }
        }
        let metrics = FoldMetrics::compute(&truth, &pred, &scores).context("scoring voted predictions")?;
        io::write_json(&dir.join(VOTED_METRICS_FILE), &metrics)?;
        println!("voted macro F1 {:.2} on {} labeled images", metrics.macro_f1, truth.len());
    }
    let counts = FinalLabel::ALL.map(|l| outputs.iter().filter(|o| o.decision.final_label == l).count());
    println!("{} images: {} rubbish, {} healthy, {} unhealthy", outputs.len(), counts[0], counts[1], counts[2]);
    let resolved = RunConfig { command: Some("predict".into()), method: Some(method.name().to_string()), ..cfg };
    resolved.save(&dir)?;
    Ok(resolved)
}

pub fn cmd_synth(cfg: RunConfig) -> anyhow::Result<RunConfig> {
    let config = cfg.synthetic_config()?;
    let (labels, table) = generate(&config)?;
    let dir = out_dir(&cfg)?;
    create_with(&dir.join(LABELS_FILE), |w| Ok(io::write_labels(&labels, w)?))?;
    create_with(&dir.join(PREDICTIONS_FILE), |w| Ok(io::write_predictions(&table, w)?))?;
    println!(
        "{} images, {} models, {} folds, {} prediction rows",
        labels.len(),
        config.n_models,
        config.n_folds,
        table.len()
    );
    let resolved = RunConfig { command: Some("synth".into()), ..cfg }.with_synthetic(&config);
    resolved.save(&dir)?;
    Ok(resolved)
}

pub fn cmd_gain(cfg: RunConfig) -> anyhow::Result<RunConfig> {
    let config = cfg.synthetic_config()?;
    let replications = cfg.synthetic.as_ref().and_then(|s| s.replications).unwrap_or(DEFAULT_REPLICATIONS);
    let summary = ensemble_gain_experiment(&config, replications)?;
    let dir = out_dir(&cfg)?;
    io::write_json(&dir.join(GAIN_FILE), &summary)?;
    println!(
        "gain over {} (macro F1): {} across {replications} replications, 95% lower bound {:.2}",
        config.model_id(summary.best_model),
        summary.gain,
        summary.gain_lower_95
    );
    let mut resolved = RunConfig { command: Some("gain".into()), ..cfg }.with_synthetic(&config);
    if let Some(s) = resolved.synthetic.as_mut() {
        s.replications = Some(replications);
    }
    resolved.save(&dir)?;
    Ok(resolved)
}
