use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DatasetError, LabeledSample};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<LabeledSample>,
    pub val: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
    pub seed: u64,
    pub val_fraction: f64,
    /// Leaf classes that had a single sample and went entirely to train.
    pub singleton_classes: Vec<usize>,
}

impl DatasetSplit {
    pub fn record(&self) -> SplitRecord {
        SplitRecord {
            seed: self.seed,
            val_fraction: self.val_fraction,
            train_ids: self.train.iter().map(|s| s.id).collect(),
            val_ids: self.val.iter().map(|s| s.id).collect(),
            test_ids: self.test.iter().map(|s| s.id).collect(),
        }
    }

    pub fn with_test(mut self, test: Vec<LabeledSample>) -> Self {
        self.test = test;
        self
    }
}

/// Persisted form of a split: sample ids refer to manifest entry ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub seed: u64,
    pub val_fraction: f64,
    pub train_ids: Vec<usize>,
    pub val_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
}

impl SplitRecord {
    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let text = serde_json::to_string_pretty(self).expect("plain data serializes");
        std::fs::write(path, text).map_err(|e| DatasetError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| DatasetError::SplitRecord {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

/// Number of validation items taken from a class of `n` samples.
fn val_count(n: usize, fraction: f64) -> usize {
    if n < 2 {
        return 0;
    }
    // tolerance keeps e.g. 0.7 * 10 from rounding up to 8
    let k = (fraction * n as f64 - 1e-9).ceil().max(1.0) as usize;
    k.min(n - 1)
}

/// Stratified train/validation split over leaf (l3) classes.
///
/// Each class contributes `ceil(fraction * n)` validation items (at least 1,
/// and never the whole class); single-sample classes stay in train. Both
/// halves keep manifest order.
pub fn split_train_val(
    samples: &[LabeledSample],
    val_fraction: f64,
    seed_value: u64,
) -> Result<DatasetSplit, DatasetError> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(DatasetError::Invalid(format!(
            "val_fraction must lie in (0, 1), got {val_fraction}"
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_class.entry(s.l3).or_default().push(i);
    }
    let mut is_val = vec![false; samples.len()];
    let mut singleton_classes = Vec::new();
    for (&class, members) in &by_class {
        let k = val_count(members.len(), val_fraction);
        if members.len() == 1 {
            log::warn!("class {class} has a single sample; it stays in the training split");
            singleton_classes.push(class);
            continue;
        }
        let mut order = members.clone();
        order.shuffle(&mut seed::rng(seed_value, &[class as u64]));
        for &i in &order[..k] {
            is_val[i] = true;
        }
    }
    let (val, train): (Vec<_>, Vec<_>) = samples.iter().zip(&is_val).partition(|(_, v)| **v);
    Ok(DatasetSplit {
        train: train.into_iter().map(|(s, _)| s.clone()).collect(),
        val: val.into_iter().map(|(s, _)| s.clone()).collect(),
        test: Vec::new(),
        seed: seed_value,
        val_fraction,
        singleton_classes,
    })
}
