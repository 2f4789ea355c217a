use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::dataset::{HierarchyTable, Level, L1_CLASSES, L2_CLASSES};

/// Rank of `label` in `row`: the number of classes admitted before it. A
/// class ahead of the label either scores higher or ties with a lower index.
fn label_rank(row: &[f64], label: usize) -> usize {
    let y = row[label];
    row.iter()
        .enumerate()
        .filter(|&(j, &v)| v > y || (v == y && j < label))
        .count()
}

fn check_labels(labels: &[usize], classes: usize) -> Result<(), EvalError> {
    match labels.iter().find(|&&l| l >= classes) {
        Some(&label) => Err(EvalError::Label { label, classes }),
        None => Ok(()),
    }
}

/// Fraction of rows whose label is among the `k` highest logits; ties at the
/// boundary admit the lower class index first.
pub fn topk_accuracy(
    logits: ArrayView2<'_, f64>,
    labels: &[usize],
    k: usize,
) -> Result<f64, EvalError> {
    let (n, classes) = logits.dim();
    if !(1..=classes).contains(&k) {
        return Err(EvalError::K { k, classes });
    }
    if n != labels.len() {
        return Err(EvalError::Shape(format!(
            "{n} logit rows for {} labels",
            labels.len()
        )));
    }
    if n == 0 {
        return Err(EvalError::Empty);
    }
    check_labels(labels, classes)?;
    let hits = logits
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &l)| label_rank(&row.to_vec(), l) < k)
        .count();
    Ok(hits as f64 / n as f64)
}

/// Arg-max of each row, lowest index on ties.
pub fn predictions(logits: ArrayView2<'_, f64>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, &v)| {
                    if v > best.1 {
                        (j, v)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect()
}

/// Entry `(i, j)` counts samples of true class `i` predicted as `j`.
pub fn confusion_matrix(
    pred: &[usize],
    truth: &[usize],
    classes: usize,
) -> Result<Array2<u64>, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::Shape(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    check_labels(pred, classes)?;
    check_labels(truth, classes)?;
    let mut m = Array2::zeros((classes, classes));
    for (&p, &t) in pred.iter().zip(truth) {
        m[[t, p]] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Precision or recall had a zero denominator and was taken as 0.
    pub undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrfSummary {
    pub per_class: Vec<ClassStats>,
    /// Unweighted means over classes with nonzero support.
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Support-weighted means.
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    /// Classes left out of the averages for lack of support.
    pub excluded: Vec<usize>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Per-class precision (diag / column sum), recall (diag / row sum) and F1,
/// plus macro and weighted averages.
pub fn macro_prf(confusion: &Array2<u64>) -> Result<PrfSummary, EvalError> {
    let (rows, cols) = confusion.dim();
    if rows != cols {
        return Err(EvalError::Shape(format!(
            "confusion matrix is {rows}x{cols}"
        )));
    }
    let total: u64 = confusion.sum();
    if total == 0 {
        return Err(EvalError::Empty);
    }
    let mut per_class = Vec::with_capacity(rows);
    for c in 0..rows {
        let tp = confusion[[c, c]];
        let support = confusion.row(c).sum();
        let predicted = confusion.column(c).sum();
        let p = ratio(tp, predicted);
        let r = ratio(tp, support);
        let (precision, recall) = (p.unwrap_or(0.0), r.unwrap_or(0.0));
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassStats {
            precision,
            recall,
            f1,
            support,
            undefined: p.is_none() || r.is_none(),
        });
    }
    let counted: Vec<&ClassStats> = per_class.iter().filter(|s| s.support > 0).collect();
    let n = counted.len() as f64;
    let mean = |f: fn(&ClassStats) -> f64| counted.iter().map(|s| f(s)).sum::<f64>() / n;
    let weighted = |f: fn(&ClassStats) -> f64| {
        counted.iter().map(|s| f(s) * s.support as f64).sum::<f64>() / total as f64
    };
    Ok(PrfSummary {
        macro_precision: mean(|s| s.precision),
        macro_recall: mean(|s| s.recall),
        macro_f1: mean(|s| s.f1),
        weighted_precision: weighted(|s| s.precision),
        weighted_recall: weighted(|s| s.recall),
        weighted_f1: weighted(|s| s.f1),
        excluded: (0..rows).filter(|&c| per_class[c].support == 0).collect(),
        per_class,
    })
}

/// Metrics at one level of the hierarchy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: Level,
    pub classes: usize,
    pub top1: f64,
    pub top5: f64,
    pub prf: PrfSummary,
    pub confusion: Vec<Vec<u64>>,
}

fn level_classes(level: Level, leaves: usize) -> usize {
    match level {
        Level::L1 => L1_CLASSES,
        Level::L2 => L2_CLASSES,
        Level::L3 => leaves,
    }
}

/// Leaf logits collapsed to `level`: each coarse class scores the maximum
/// logit over its known leaves; returns the coarse logits and labels.
pub fn rollup_logits(
    logits: ArrayView2<'_, f64>,
    labels: &[usize],
    hierarchy: &HierarchyTable,
    level: Level,
) -> Result<(Array2<f64>, Vec<usize>), EvalError> {
    let (n, leaves) = logits.dim();
    let classes = level_classes(level, leaves);
    let parent = |l3: usize| -> Result<Option<usize>, EvalError> {
        match hierarchy.ancestor(l3, level) {
            Some(p) if p >= classes => Err(EvalError::Hierarchy(format!(
                "{} class {p} outside 0..{classes}",
                level.name()
            ))),
            p => Ok(p),
        }
    };
    let map: Vec<Option<usize>> = (0..leaves).map(parent).collect::<Result<_, _>>()?;
    let mut coarse = Array2::from_elem((n, classes), f64::NEG_INFINITY);
    for i in 0..n {
        for (l3, p) in map.iter().enumerate() {
            if let Some(p) = *p {
                let v = logits[[i, l3]];
                if v > coarse[[i, p]] {
                    coarse[[i, p]] = v;
                }
            }
        }
    }
    let coarse_labels = labels
        .iter()
        .map(|&l| {
            map.get(l).copied().flatten().ok_or_else(|| {
                EvalError::Hierarchy(format!("label {l} has no {} ancestor", level.name()))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((coarse, coarse_labels))
}

/// Top-k, confusion and PRF of `logits` at `level`.
pub fn rollup_level(
    logits: ArrayView2<'_, f64>,
    labels: &[usize],
    hierarchy: &HierarchyTable,
    level: Level,
) -> Result<LevelReport, EvalError> {
    let (coarse, coarse_labels) = rollup_logits(logits, labels, hierarchy, level)?;
    level_report(coarse.view(), &coarse_labels, level)
}

pub(crate) fn level_report(
    logits: ArrayView2<'_, f64>,
    labels: &[usize],
    level: Level,
) -> Result<LevelReport, EvalError> {
    let classes = logits.ncols();
    let confusion = confusion_matrix(&predictions(logits), labels, classes)?;
    Ok(LevelReport {
        level,
        classes,
        top1: topk_accuracy(logits, labels, 1)?,
        top5: topk_accuracy(logits, labels, 5.min(classes))?,
        prf: macro_prf(&confusion)?,
        confusion: confusion.rows().into_iter().map(|r| r.to_vec()).collect(),
    })
}
