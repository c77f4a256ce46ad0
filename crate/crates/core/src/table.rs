//! Ground-truth labels and the per-model, per-fold probability table.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::label::{RawLabel, Stage};

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Componentwise sigmoid; rejects NaN and infinities.
pub fn logits_to_probabilities(logits: &[f64]) -> Result<Vec<f64>> {
    logits.iter().map(|&z| if z.is_finite() { Ok(sigmoid(z)) } else { Err(Error::NonFiniteLogit(z)) }).collect()
}

fn check_probability(p: f64) -> Result<f64> {
    if p.is_finite() && (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(Error::ProbabilityOutOfRange(p))
    }
}

/// One backbone's sigmoid output for one image.
///
/// `p` holds `[p_rubbish]` for stage 1 and `[p_healthy, p_unhealthy]` for
/// stage 2. The two stage-2 heads are independent and need not sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub image_id: String,
    pub model_id: String,
    pub fold: u32,
    pub stage: Stage,
    pub p: Vec<f64>,
}

impl PredictionRecord {
    pub fn new(
        image_id: impl Into<String>,
        model_id: impl Into<String>,
        fold: u32,
        stage: Stage,
        p: Vec<f64>,
    ) -> Result<Self> {
        validate_values(fold, stage, &p)?;
        Ok(PredictionRecord { image_id: image_id.into(), model_id: model_id.into(), fold, stage, p })
    }
}

fn validate_values(fold: u32, stage: Stage, p: &[f64]) -> Result<()> {
    if fold == 0 {
        return Err(Error::InvalidFoldId(fold));
    }
    if p.len() != stage.width() {
        return Err(Error::WrongArity { stage, expected: stage.width(), found: p.len() });
    }
    for &v in p {
        check_probability(v)?;
    }
    Ok(())
}

/// Borrowed view of a stored record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordRef<'a> {
    pub image_id: &'a str,
    pub model_id: &'a str,
    pub fold: u32,
    pub stage: Stage,
    pub p: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ColumnKey {
    pub fold: u32,
    pub stage: Stage,
    pub model: usize,
}

/// Dense, validated prediction table.
///
/// Image and model ids are interned in sorted order. Each `(fold, stage,
/// model)` triple owns one column of `n_images * stage.width()` values where
/// NaN marks a missing prediction.
#[derive(Debug, Clone, Default)]
pub struct PredictionTable {
    images: Vec<String>,
    models: Vec<String>,
    columns: BTreeMap<ColumnKey, Vec<f64>>,
    records: usize,
}

/// Bitwise on values, so missing cells compare equal.
impl PartialEq for PredictionTable {
    fn eq(&self, other: &Self) -> bool {
        self.images == other.images
            && self.models == other.models
            && self.records == other.records
            && self.columns.len() == other.columns.len()
            && self.columns.iter().zip(&other.columns).all(|((ka, a), (kb, b))| {
                ka == kb && a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

impl PredictionTable {
    pub fn from_records<I>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = PredictionRecord>,
    {
        let mut builder = PredictionTableBuilder::default();
        for r in records {
            builder.push(&r.image_id, &r.model_id, r.fold, r.stage, &r.p)?;
        }
        Ok(builder.build())
    }

    pub fn images(&self) -> &[String] {
        &self.images
    }

    pub fn models(&self) -> &[String] {
        &self.models
    }

    /// Number of stored records.
    pub fn len(&self) -> usize {
        self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records == 0
    }

    pub fn image_index(&self, id: &str) -> Option<usize> {
        self.images.binary_search_by(|probe| probe.as_str().cmp(id)).ok()
    }

    pub fn model_index(&self, id: &str) -> Option<usize> {
        self.models.binary_search_by(|probe| probe.as_str().cmp(id)).ok()
    }

    pub fn folds(&self) -> BTreeSet<u32> {
        self.columns.keys().map(|k| k.fold).collect()
    }

    /// Models with at least one prediction for `(fold, stage)`, ascending.
    pub fn models_for(&self, fold: u32, stage: Stage) -> Vec<usize> {
        self.columns.keys().filter(|k| k.fold == fold && k.stage == stage).map(|k| k.model).collect()
    }

    pub fn column(&self, fold: u32, stage: Stage, model: usize) -> Option<&[f64]> {
        self.columns.get(&ColumnKey { fold, stage, model }).map(Vec::as_slice)
    }

    pub fn get(&self, image: usize, model: usize, fold: u32, stage: Stage) -> Option<&[f64]> {
        let w = stage.width();
        let col = self.column(fold, stage, model)?;
        let p = &col[image * w..(image + 1) * w];
        (!p[0].is_nan()).then_some(p)
    }

    /// Records in (image, fold, stage, model) order.
    pub fn iter(&self) -> impl Iterator<Item = RecordRef<'_>> + '_ {
        (0..self.images.len()).flat_map(move |image| {
            let mut keys: Vec<&ColumnKey> = self.columns.keys().collect();
            keys.sort_by_key(|k| (k.fold, k.stage, self.models[k.model].as_str()));
            keys.into_iter().filter_map(move |k| {
                let p = self.get(image, k.model, k.fold, k.stage)?;
                Some(RecordRef {
                    image_id: &self.images[image],
                    model_id: &self.models[k.model],
                    fold: k.fold,
                    stage: k.stage,
                    p,
                })
            })
        })
    }
}

/// Incremental constructor used by ingestion and the synthetic generator.
#[derive(Debug, Default)]
pub struct PredictionTableBuilder {
    image_ids: BTreeMap<String, usize>,
    images: Vec<String>,
    model_ids: BTreeMap<String, usize>,
    models: Vec<String>,
    columns: BTreeMap<ColumnKey, Vec<f64>>,
    records: usize,
}

impl PredictionTableBuilder {
    pub fn intern_image(&mut self, id: &str) -> usize {
        intern(&mut self.image_ids, &mut self.images, id)
    }

    pub fn intern_model(&mut self, id: &str) -> usize {
        intern(&mut self.model_ids, &mut self.models, id)
    }

    /// Insert by interned indices. Fails on invalid values or a duplicate key.
    pub fn insert(&mut self, image: usize, model: usize, fold: u32, stage: Stage, p: &[f64]) -> Result<()> {
        validate_values(fold, stage, p)?;
        let w = stage.width();
        let col = self.columns.entry(ColumnKey { fold, stage, model }).or_default();
        if col.len() < (image + 1) * w {
            col.resize((image + 1) * w, f64::NAN);
        }
        let slot = &mut col[image * w..(image + 1) * w];
        if !slot[0].is_nan() {
            return Err(Error::DuplicatePrediction {
                image: self.images[image].clone(),
                model: self.models[model].clone(),
                fold,
                stage,
            });
        }
        slot.copy_from_slice(p);
        self.records += 1;
        Ok(())
    }

    pub fn push(&mut self, image_id: &str, model_id: &str, fold: u32, stage: Stage, p: &[f64]) -> Result<()> {
        validate_values(fold, stage, p)?;
        let image = self.intern_image(image_id);
        let model = self.intern_model(model_id);
        self.insert(image, model, fold, stage, p)
    }

    pub fn build(self) -> PredictionTable {
        let n = self.images.len();
        let image_perm = sorted_permutation(self.image_ids);
        let model_perm = sorted_permutation(self.model_ids);
        let columns = self
            .columns
            .into_iter()
            .map(|(key, old)| {
                let w = key.stage.width();
                let mut col = vec![f64::NAN; n * w];
                for (old_idx, chunk) in old.chunks(w).enumerate() {
                    let new_idx = image_perm[old_idx];
                    col[new_idx * w..(new_idx + 1) * w].copy_from_slice(chunk);
                }
                (ColumnKey { model: model_perm[key.model], ..key }, col)
            })
            .collect();
        let mut images = self.images;
        images.sort();
        let mut models = self.models;
        models.sort();
        PredictionTable { images, models, columns, records: self.records }
    }
}

fn intern(index: &mut BTreeMap<String, usize>, ids: &mut Vec<String>, id: &str) -> usize {
    if let Some(&i) = index.get(id) {
        return i;
    }
    let i = ids.len();
    index.insert(id.to_string(), i);
    ids.push(id.to_string());
    i
}

/// Maps insertion index to sorted position. BTreeMap iteration is already sorted.
fn sorted_permutation(index: BTreeMap<String, usize>) -> Vec<usize> {
    let mut perm = vec![0; index.len()];
    for (rank, (_, old)) in index.into_iter().enumerate() {
        perm[old] = rank;
    }
    perm
}

/// Image id to expert annotation. Never empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTable {
    entries: BTreeMap<String, RawLabel>,
}

impl LabelTable {
    pub fn from_pairs<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, RawLabel)>,
        S: Into<String>,
    {
        let mut entries = BTreeMap::new();
        for (id, label) in pairs {
            let id = id.into();
            if entries.contains_key(&id) {
                return Err(Error::DuplicateLabel(id));
            }
            entries.insert(id, label);
        }
        if entries.is_empty() {
            return Err(Error::EmptyLabels);
        }
        Ok(LabelTable { entries })
    }

    pub fn get(&self, id: &str) -> Option<RawLabel> {
        self.entries.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorted by image id.
    pub fn iter(&self) -> impl Iterator<Item = (&str, RawLabel)> + '_ {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Counts indexed by [`RawLabel::index`].
    pub fn counts(&self) -> [usize; 4] {
        let mut counts = [0; 4];
        for label in self.entries.values() {
            counts[label.index()] += 1;
        }
        counts
    }
}
