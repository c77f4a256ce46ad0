//! CSV and JSON artifact formats.
//!
//! Readers take any byte stream and report problems with the 1-based line
//! number of the offending record. Floats are written in Rust's shortest
//! round-trip form, so reading back a written file reproduces every value
//! bit for bit.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use anyhow::Context;
use cascade_core::ensemble::vote_string;
use cascade_core::pipeline::{Calibrations, Method};
use cascade_core::table::PredictionTableBuilder;
use cascade_core::{
    logits_to_probabilities, CascadeOutput, FoldAssignment, LabelTable, Objective, PredictionTable, RawLabel, Stage,
    Stage1Label, Stage2Label, Subset, ThresholdCalibration,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LABEL_HEADER: [&str; 2] = ["image_id", "label"];
pub const PREDICTION_HEADER: [&str; 6] = ["image_id", "model_id", "fold", "stage", "p1", "p2"];
pub const LOGIT_HEADER: [&str; 6] = ["image_id", "model_id", "fold", "stage", "logit1", "logit2"];
pub const SPLIT_HEADER: [&str; 3] = ["image_id", "fold", "subset"];
pub const FINAL_HEADER: [&str; 7] = [
    "image_id",
    "final_label",
    "p_rubbish",
    "p_healthy_composed",
    "p_unhealthy_composed",
    "votes_stage1",
    "votes_stage2",
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unexpected header `{found}`, expected `{expected}`")]
    Header { expected: String, found: String },
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn row_error(record: &csv::StringRecord, message: impl ToString) -> IngestError {
    IngestError::Row { line: record.position().map_or(0, |p| p.line()), message: message.to_string() }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(input)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, accepted: &[&[&str]]) -> Result<usize, IngestError> {
    let found = rdr.headers()?.clone();
    let fields: Vec<&str> = found.iter().collect();
    accepted
        .iter()
        .position(|h| fields == **h)
        .ok_or_else(|| IngestError::Header { expected: accepted[0].join(","), found: fields.join(",") })
}

fn field<'r>(record: &'r csv::StringRecord, i: usize, name: &str) -> Result<&'r str, IngestError> {
    match record.get(i) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(row_error(record, format!("missing {name}"))),
    }
}

fn parse_f64(record: &csv::StringRecord, i: usize, name: &str) -> Result<f64, IngestError> {
    let raw = field(record, i, name)?;
    raw.parse::<f64>().map_err(|_| row_error(record, format!("{name} `{raw}` is not a number")))
}

/// `image_id,label` with lowercase labels.
pub fn read_labels<R: Read>(input: R) -> Result<LabelTable, IngestError> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &[&LABEL_HEADER])?;
    let mut pairs = Vec::new();
    let mut seen = BTreeSet::new();
    for record in rdr.records() {
        let record = record?;
        if record.len() != 2 {
            return Err(row_error(&record, format!("expected 2 fields, found {}", record.len())));
        }
        let id = field(&record, 0, "image_id")?;
        let label: RawLabel = field(&record, 1, "label")?.parse().map_err(|e| row_error(&record, e))?;
        if !seen.insert(id.to_string()) {
            return Err(row_error(&record, format!("duplicate image_id {id}")));
        }
        pairs.push((id.to_string(), label));
    }
    LabelTable::from_pairs(pairs).map_err(|e| IngestError::Row { line: 1, message: e.to_string() })
}

pub fn write_labels<W: Write>(labels: &LabelTable, output: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(LABEL_HEADER)?;
    for (id, label) in labels.iter() {
        w.write_record([id, label.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

/// Probability rows, or logit rows if the header names `logit1,logit2`.
/// Stage-1 rows leave the second value empty (or omit the column).
pub fn read_predictions<R: Read>(input: R) -> Result<PredictionTable, IngestError> {
    let mut rdr = reader(input);
    let short_p = &PREDICTION_HEADER[..5];
    let short_logit = &LOGIT_HEADER[..5];
    let logits = check_header(&mut rdr, &[&PREDICTION_HEADER, &LOGIT_HEADER, short_p, short_logit])? % 2 == 1;
    let (n1, n2) = if logits { ("logit1", "logit2") } else { ("p1", "p2") };
    let mut builder = PredictionTableBuilder::default();
    for record in rdr.records() {
        let record = record?;
        if !(5..=6).contains(&record.len()) {
            return Err(row_error(&record, format!("expected 5 or 6 fields, found {}", record.len())));
        }
        let image = field(&record, 0, "image_id")?;
        let model = field(&record, 1, "model_id")?;
        let fold_raw = field(&record, 2, "fold")?;
        let fold: u32 =
            fold_raw.parse().map_err(|_| row_error(&record, format!("fold `{fold_raw}` is not an integer")))?;
        let stage: Stage = field(&record, 3, "stage")?.parse().map_err(|e| row_error(&record, e))?;
        let mut values = vec![parse_f64(&record, 4, n1)?];
        let second = record.get(5).filter(|v| !v.is_empty());
        match (stage, second) {
            (Stage::Stage1, None) => {}
            (Stage::Stage1, Some(_)) => return Err(row_error(&record, format!("stage1 rows leave {n2} empty"))),
            (Stage::Stage2, None) => return Err(row_error(&record, format!("missing {n2}"))),
            (Stage::Stage2, Some(_)) => values.push(parse_f64(&record, 5, n2)?),
        }
        if logits {
            values = logits_to_probabilities(&values).map_err(|e| row_error(&record, e))?;
        }
        builder.push(image, model, fold, stage, &values).map_err(|e| row_error(&record, e))?;
    }
    Ok(builder.build())
}

pub fn write_predictions<W: Write>(table: &PredictionTable, output: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(PREDICTION_HEADER)?;
    for r in table.iter() {
        let p2 = r.p.get(1).map(f64::to_string).unwrap_or_default();
        w.write_record([r.image_id, r.model_id, &r.fold.to_string(), r.stage.as_str(), &r.p[0].to_string(), &p2])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per (image, fold), ordered by fold then image id.
pub fn write_splits<W: Write>(folds: &[FoldAssignment], output: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(SPLIT_HEADER)?;
    for fa in folds {
        let mut rows: Vec<(&str, Subset)> =
            Subset::ALL.iter().flat_map(|&s| fa.subset(s).iter().map(move |id| (id.as_str(), s))).collect();
        rows.sort();
        let fold = fa.fold.to_string();
        for (id, subset) in rows {
            w.write_record([id, &fold, subset.as_str()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Folds in ascending order. The seed is not part of the file and reads
/// back as 0.
pub fn read_splits<R: Read>(input: R) -> Result<Vec<FoldAssignment>, IngestError> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &[&SPLIT_HEADER])?;
    let mut folds: BTreeMap<u32, FoldAssignment> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for record in rdr.records() {
        let record = record?;
        if record.len() != 3 {
            return Err(row_error(&record, format!("expected 3 fields, found {}", record.len())));
        }
        let id = field(&record, 0, "image_id")?;
        let fold_raw = field(&record, 1, "fold")?;
        let fold: u32 = match fold_raw.parse() {
            Ok(f) if f >= 1 => f,
            _ => return Err(row_error(&record, format!("fold `{fold_raw}` is not a positive integer"))),
        };
        let subset: Subset = field(&record, 2, "subset")?.parse().map_err(|e| row_error(&record, e))?;
        if !seen.insert((id.to_string(), fold)) {
            return Err(row_error(&record, format!("{id} listed twice for fold {fold}")));
        }
        let fa = folds.entry(fold).or_insert_with(|| FoldAssignment {
            fold,
            seed: 0,
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        });
        match subset {
            Subset::Train => fa.train.push(id.to_string()),
            Subset::Val => fa.val.push(id.to_string()),
            Subset::Test => fa.test.push(id.to_string()),
        }
    }
    Ok(folds
        .into_values()
        .map(|mut fa| {
            fa.train.sort();
            fa.val.sort();
            fa.test.sort();
            fa
        })
        .collect())
}

/// One calibrated threshold as stored in `thresholds.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdEntry {
    /// `ensemble` or a model id.
    pub method: String,
    pub fold: u32,
    pub stage: Stage,
    pub objective: Objective,
    pub threshold: f64,
    pub achieved_score: f64,
}

pub fn threshold_entries(method: &Method, cals: &Calibrations) -> Vec<ThresholdEntry> {
    cals.iter()
        .map(|(fold, stage, c)| ThresholdEntry {
            method: method.name().to_string(),
            fold,
            stage,
            objective: c.objective,
            threshold: c.threshold,
            achieved_score: c.achieved_score,
        })
        .collect()
}

/// Groups entries by method. Duplicate (method, fold, stage) keys and
/// thresholds outside [0, 1] are rejected.
pub fn calibrations_by_method(entries: &[ThresholdEntry]) -> anyhow::Result<BTreeMap<Method, Calibrations>> {
    let mut out: BTreeMap<Method, Calibrations> = BTreeMap::new();
    for e in entries {
        anyhow::ensure!(
            (0.0..=1.0).contains(&e.threshold),
            "threshold {} for {} fold {} / {} is outside [0, 1]",
            e.threshold,
            e.method,
            e.fold,
            e.stage
        );
        let cals = out.entry(Method::parse(&e.method)).or_default();
        anyhow::ensure!(
            cals.get(e.fold, e.stage).is_err(),
            "duplicate threshold for {} fold {} / {}",
            e.method,
            e.fold,
            e.stage
        );
        let cal =
            ThresholdCalibration { threshold: e.threshold, achieved_score: e.achieved_score, objective: e.objective };
        cals.insert(e.fold, e.stage, cal);
    }
    Ok(out)
}

pub fn write_final_predictions<W: Write>(outputs: &[CascadeOutput], output: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(FINAL_HEADER)?;
    for o in outputs {
        let d = &o.decision;
        let votes2 = d.votes_stage2.as_deref().map(|v| vote_string(v, Stage2Label::code)).unwrap_or_default();
        w.write_record([
            d.image_id.as_str(),
            d.final_label.as_str(),
            &o.composed_scores[0].to_string(),
            &o.composed_scores[1].to_string(),
            &o.composed_scores[2].to_string(),
            &vote_string(&d.votes_stage1, Stage1Label::code),
            &votes2,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn open(path: &Path) -> anyhow::Result<File> {
    File::open(path).with_context(|| format!("cannot open {}", path.display()))
}

/// Creates `path` and hands a buffered writer to `f`.
pub fn create_with<T>(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> anyhow::Result<T>) -> anyhow::Result<T> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    let out = f(&mut w)?;
    w.flush().with_context(|| format!("cannot write {}", path.display()))?;
    Ok(out)
}

pub fn load_labels(path: &Path) -> anyhow::Result<LabelTable> {
    read_labels(open(path)?).with_context(|| format!("{}", path.display()))
}

pub fn load_predictions(path: &Path) -> anyhow::Result<PredictionTable> {
    read_predictions(open(path)?).with_context(|| format!("{}", path.display()))
}

pub fn load_splits(path: &Path) -> anyhow::Result<Vec<FoldAssignment>> {
    read_splits(open(path)?).with_context(|| format!("{}", path.display()))
}

pub fn load_thresholds(path: &Path) -> anyhow::Result<Vec<ThresholdEntry>> {
    serde_json::from_reader(open(path)?).with_context(|| format!("{}", path.display()))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> anyhow::Result<()> {
    create_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}
