use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DatasetError, LabeledSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    L1,
    L2,
    L3,
}

impl Level {
    pub fn name(self) -> &'static str {
        match self {
            Level::L1 => "l1",
            Level::L2 => "l2",
            Level::L3 => "l3",
        }
    }
}

/// Parent maps of the pose tree as induced by a manifest.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HierarchyTable {
    pub l3_to_l2: BTreeMap<usize, usize>,
    pub l2_to_l1: BTreeMap<usize, usize>,
    /// Leaf names, taken from the first path component of the image path.
    pub l3_names: BTreeMap<usize, String>,
}

impl HierarchyTable {
    pub fn l3_parent(&self, l3: usize) -> Option<usize> {
        self.l3_to_l2.get(&l3).copied()
    }

    pub fn l2_parent(&self, l2: usize) -> Option<usize> {
        self.l2_to_l1.get(&l2).copied()
    }

    /// Maps a leaf id to its ancestor at `level`.
    pub fn ancestor(&self, l3: usize, level: Level) -> Option<usize> {
        match level {
            Level::L3 => self.l3_to_l2.contains_key(&l3).then_some(l3),
            Level::L2 => self.l3_parent(l3),
            Level::L1 => self.l3_parent(l3).and_then(|p| self.l2_parent(p)),
        }
    }

    /// Distinct classes observed at each level (l1, l2, l3).
    pub fn class_counts(&self) -> (usize, usize, usize) {
        let l1: std::collections::BTreeSet<_> = self.l2_to_l1.values().collect();
        (l1.len(), self.l2_to_l1.len(), self.l3_to_l2.len())
    }

    pub fn check(&self, s: &LabeledSample) -> Result<(), DatasetError> {
        let mismatch = |reason: String| DatasetError::HierarchyMismatch {
            id: s.id,
            path: s.image_path.clone(),
            reason,
        };
        match self.l3_parent(s.l3) {
            None => return Err(mismatch(format!("unknown l3 class {}", s.l3))),
            Some(p) if p != s.l2 => {
                return Err(mismatch(format!(
                    "l3 {} belongs to l2 {p}, not {}",
                    s.l3, s.l2
                )))
            }
            _ => {}
        }
        match self.l2_parent(s.l2) {
            Some(p) if p == s.l1 => Ok(()),
            Some(p) => Err(mismatch(format!(
                "l2 {} belongs to l1 {p}, not {}",
                s.l2, s.l1
            ))),
            None => Err(mismatch(format!("unknown l2 class {}", s.l2))),
        }
    }
}

fn insert_parent(
    map: &mut BTreeMap<usize, usize>,
    child: usize,
    parent: usize,
    level: &'static str,
) -> Result<(), DatasetError> {
    match map.insert(child, parent) {
        Some(prev) if prev != parent => Err(DatasetError::InconsistentParent {
            level,
            child,
            first: prev.min(parent),
            second: prev.max(parent),
        }),
        _ => Ok(()),
    }
}

/// Induces the parent maps from observed label triples.
pub fn build_hierarchy(samples: &[LabeledSample]) -> Result<HierarchyTable, DatasetError> {
    if samples.is_empty() {
        return Err(DatasetError::Invalid(
            "cannot build a hierarchy from zero samples".into(),
        ));
    }
    let mut table = HierarchyTable::default();
    for s in samples {
        insert_parent(&mut table.l3_to_l2, s.l3, s.l2, "l3")?;
        insert_parent(&mut table.l2_to_l1, s.l2, s.l1, "l2")?;
        table.l3_names.entry(s.l3).or_insert_with(|| {
            s.image_path
                .split(['/', '\\'])
                .next()
                .filter(|c| !c.is_empty() && *c != s.image_path)
                .map(str::to_string)
                .unwrap_or_else(|| format!("class_{}", s.l3))
        });
    }
    let (l1, l2, l3) = table.class_counts();
    log::info!("hierarchy: {l1} level-1, {l2} level-2, {l3} level-3 classes observed");
    Ok(table)
}
