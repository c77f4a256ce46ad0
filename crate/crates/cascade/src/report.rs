//! Per-fold and aggregated evaluation tables.

use std::io::Write;

use cascade_core::metrics::{aggregate_folds, random_baseline};
use cascade_core::pipeline::FoldEvaluation;
use cascade_core::{AggregateMetrics, FinalLabel, FoldMetrics};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const RANDOM_PREDICTION: &str = "Random Prediction";
pub const ENSEMBLE_ROW: &str = "Ensemble";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRow {
    pub fold: u32,
    pub n_test: usize,
    #[serde(flatten)]
    pub metrics: FoldMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub folds: Vec<FoldRow>,
    /// Mean and sample standard deviation over folds; absent with one fold.
    pub aggregate: Option<AggregateMetrics>,
}

impl MethodReport {
    pub fn new(method: impl Into<String>, folds: Vec<FoldRow>) -> Self {
        let per_fold: Vec<FoldMetrics> = folds.iter().map(|f| f.metrics).collect();
        let aggregate = aggregate_folds(&per_fold).ok();
        MethodReport { method: method.into(), folds, aggregate }
    }

    pub fn from_evaluations(method: impl Into<String>, evals: &[FoldEvaluation]) -> Self {
        let rows = evals.iter().map(|e| FoldRow { fold: e.fold, n_test: e.truth.len(), metrics: e.metrics }).collect();
        Self::new(method, rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub methods: Vec<MethodReport>,
}

/// Uniform random labels and scores on each fold's test truth; fold `f`
/// draws from `seed + f`.
pub fn random_rows(truths: &[(u32, &[FinalLabel])], seed: u64) -> cascade_core::Result<Vec<FoldRow>> {
    truths
        .iter()
        .map(|&(fold, truth)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(u64::from(fold)));
            Ok(FoldRow { fold, n_test: truth.len(), metrics: random_baseline(truth, &mut rng)? })
        })
        .collect()
}

fn header() -> Vec<&'static str> {
    let mut h = vec!["method", "fold"];
    h.extend(FoldMetrics::NAMES);
    h
}

/// Fold rows with two decimals, then a `mean ± std` row per method.
pub fn write_csv<W: Write>(report: &Report, output: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(header())?;
    for m in &report.methods {
        for row in &m.folds {
            let mut rec = vec![m.method.clone(), row.fold.to_string()];
            rec.extend(row.metrics.values().iter().map(|v| format!("{v:.2}")));
            w.write_record(&rec)?;
        }
        if let Some(agg) = &m.aggregate {
            let mut rec = vec![m.method.clone(), "mean".to_string()];
            rec.extend(agg.values().iter().map(ToString::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Aggregate block as an aligned text table for the terminal.
pub fn summary_table(report: &Report) -> String {
    let width = report.methods.iter().map(|m| m.method.len()).max().unwrap_or(6).max(6);
    let mut out = format!("{:width$}", "method");
    for name in FoldMetrics::NAMES {
        out.push_str(&format!("  {name:>14}"));
    }
    out.push('\n');
    for m in &report.methods {
        out.push_str(&format!("{:width$}", m.method));
        match &m.aggregate {
            Some(agg) => agg.values().iter().for_each(|s| out.push_str(&format!("  {:>14}", s.to_string()))),
            None => m.folds[0].metrics.values().iter().for_each(|v| out.push_str(&format!("  {v:>14.2}"))),
        }
        out.push('\n');
    }
    out
}
