//! Stratified train/validation/test partitions and balanced class weights.
//!
//! Every fold is an independent stratified draw seeded with `seed + fold`.
//! Within a class, ids are sorted, shuffled and cut at quotas obtained by the
//! largest-remainder method, so each subset holds its exact share of the
//! class up to one image. Images labeled both are kept for training only.

use core::fmt;
use core::str::FromStr;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::RawLabel;
use crate::table::LabelTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Train,
    Val,
    Test,
}

impl Subset {
    pub const ALL: [Subset; 3] = [Subset::Train, Subset::Val, Subset::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Train => "train",
            Subset::Val => "val",
            Subset::Test => "test",
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Subset::Train),
            "val" => Ok(Subset::Val),
            "test" => Ok(Subset::Test),
            other => Err(Error::InvalidConfig { field: "subset", reason: other.to_string() }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    pub const DEFAULT: SplitRatios = SplitRatios { train: 0.8, val: 0.1, test: 0.1 };

    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let ok =
            [train, val, test].iter().all(|r| r.is_finite() && *r > 0.0) && (train + val + test - 1.0).abs() <= 1e-9;
        if ok {
            Ok(SplitRatios { train, val, test })
        } else {
            Err(Error::InvalidRatios(train, val, test))
        }
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Largest-remainder apportionment of `n` items; ties in the fractional part
/// favor train, then val, then test.
pub fn quotas(n: usize, ratios: &SplitRatios) -> [usize; 3] {
    let exact = ratios.as_array().map(|r| n as f64 * r);
    let mut q = exact.map(|e| libm::floor(e) as usize);
    let assigned: usize = q.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = exact[a] - q[a] as f64;
        let fb = exact[b] - q[b] as f64;
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        q[i] += 1;
    }
    q
}

/// One fold's partition of the labeled ids. Each list is sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub fold: u32,
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl FoldAssignment {
    pub fn subset(&self, which: Subset) -> &[String] {
        match which {
            Subset::Train => &self.train,
            Subset::Val => &self.val,
            Subset::Test => &self.test,
        }
    }

    pub fn subset_of(&self, id: &str) -> Option<Subset> {
        Subset::ALL.into_iter().find(|&s| self.subset(s).binary_search_by(|probe| probe.as_str().cmp(id)).is_ok())
    }

    fn sort(&mut self) {
        self.train.sort();
        self.val.sort();
        self.test.sort();
    }
}

fn check_preconditions(labels: &LabelTable, k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::InvalidFoldCount(k));
    }
    let counts = labels.counts();
    for label in [RawLabel::Rubbish, RawLabel::Healthy, RawLabel::Unhealthy] {
        let count = counts[label.index()];
        if count < k {
            return Err(Error::TooFewMembers { label: label.to_string(), count, k });
        }
    }
    Ok(())
}

fn fold_seed(seed: u64, fold: u32) -> u64 {
    seed.wrapping_add(u64::from(fold))
}

/// `k` independent stratified draws, deterministic in `(labels, k, ratios, seed)`.
pub fn stratified_kfold_split(
    labels: &LabelTable,
    k: usize,
    ratios: SplitRatios,
    seed: u64,
) -> Result<Vec<FoldAssignment>> {
    check_preconditions(labels, k)?;
    let mut by_class: [Vec<&str>; 4] = Default::default();
    for (id, label) in labels.iter() {
        by_class[label.index()].push(id);
    }

    (1..=k as u32)
        .map(|fold| {
            let seed = fold_seed(seed, fold);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut fa = FoldAssignment { fold, seed, train: Vec::new(), val: Vec::new(), test: Vec::new() };
            for label in [RawLabel::Rubbish, RawLabel::Healthy, RawLabel::Unhealthy] {
                let mut ids = by_class[label.index()].clone();
                ids.shuffle(&mut rng);
                let [n_train, n_val, _] = quotas(ids.len(), &ratios);
                for (i, id) in ids.into_iter().enumerate() {
                    let bucket = if i < n_train {
                        &mut fa.train
                    } else if i < n_train + n_val {
                        &mut fa.val
                    } else {
                        &mut fa.test
                    };
                    bucket.push(id.to_string());
                }
            }
            fa.train.extend(by_class[RawLabel::Both.index()].iter().map(|s| s.to_string()));
            fa.sort();
            Ok(fa)
        })
        .collect()
}

/// Group-disjoint variant (e.g. one group per patient or smear).
///
/// Groups are stratified by their most frequent non-both label and assigned
/// whole, filling validation then test up to the class quota. Quotas hold
/// only approximately here. Images labeled both still go to train
/// regardless of their group.
pub fn stratified_group_kfold_split(
    labels: &LabelTable,
    groups: &BTreeMap<String, String>,
    k: usize,
    ratios: SplitRatios,
    seed: u64,
) -> Result<Vec<FoldAssignment>> {
    check_preconditions(labels, k)?;
    let mut members: BTreeMap<&str, Vec<(&str, RawLabel)>> = BTreeMap::new();
    for (id, label) in labels.iter() {
        let group = groups
            .get(id)
            .ok_or_else(|| Error::InvalidConfig { field: "groups", reason: format!("image {id} has no group") })?;
        members.entry(group.as_str()).or_default().push((id, label));
    }

    let mut by_class: [Vec<&str>; 3] = Default::default();
    for (group, images) in &members {
        let mut counts = [0usize; 3];
        for &(_, label) in images {
            if let Some(final_label) = label.final_label() {
                counts[final_label.index()] += 1;
            }
        }
        if counts.iter().any(|&c| c > 0) {
            let majority = (0..3).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a))).unwrap_or(0);
            by_class[majority].push(group);
        }
    }

    (1..=k as u32)
        .map(|fold| {
            let seed = fold_seed(seed, fold);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut fa = FoldAssignment { fold, seed, train: Vec::new(), val: Vec::new(), test: Vec::new() };
            for class_groups in &by_class {
                let mut shuffled = class_groups.clone();
                shuffled.shuffle(&mut rng);
                let size = |g: &str| members[g].iter().filter(|(_, l)| *l != RawLabel::Both).count();
                let total: usize = shuffled.iter().map(|g| size(g)).sum();
                let [_, want_val, want_test] = quotas(total, &ratios);
                let (mut got_val, mut got_test) = (0, 0);
                for group in shuffled {
                    let bucket = if got_val < want_val {
                        got_val += size(group);
                        Subset::Val
                    } else if got_test < want_test {
                        got_test += size(group);
                        Subset::Test
                    } else {
                        Subset::Train
                    };
                    for &(id, label) in &members[group] {
                        let target = if label == RawLabel::Both { Subset::Train } else { bucket };
                        match target {
                            Subset::Train => fa.train.push(id.to_string()),
                            Subset::Val => fa.val.push(id.to_string()),
                            Subset::Test => fa.test.push(id.to_string()),
                        }
                    }
                }
            }
            for (_, images) in members.iter().filter(|(g, _)| !by_class.iter().any(|c| c.contains(g))) {
                fa.train.extend(images.iter().map(|(id, _)| id.to_string()));
            }
            fa.sort();
            Ok(fa)
        })
        .collect()
}

/// Balanced weights `w_c = N / (C * n_c)`; equal counts give 1 everywhere.
pub fn class_weights<K: Ord + Clone + fmt::Display>(counts: &BTreeMap<K, u64>) -> Result<BTreeMap<K, f64>> {
    if counts.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some((k, _)) = counts.iter().find(|(_, &n)| n == 0) {
        return Err(Error::ZeroCount(k.to_string()));
    }
    let total: u64 = counts.values().sum();
    let classes = counts.len() as f64;
    Ok(counts.iter().map(|(k, &n)| (k.clone(), total as f64 / (classes * n as f64))).collect())
}
