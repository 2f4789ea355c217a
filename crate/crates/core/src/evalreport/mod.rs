//! Top-k accuracy, confusion matrices, precision/recall/F1 (leaf level and
//! rolled up the pose hierarchy), and the emitted report files: metrics
//! record, confusion CSV, comparison table and training curves.

mod metrics;
mod plot;
mod report;

pub use metrics::{
    confusion_matrix, macro_prf, predictions, rollup_level, rollup_logits, topk_accuracy,
    ClassStats, LevelReport, PrfSummary,
};
pub use plot::{write_curves, ACCURACY_PLOT, LOSS_PLOT};
pub use report::{
    aggregate_reports, emit_report, format_row, read_metrics, write_metrics, EmitSummary, TableRow,
    CONFUSION_FILE, METRICS_FILE, TABLE_FILE, TABLE_HEADER, TABLE_NOTE,
};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{HierarchyTable, Level};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("label {label} outside 0..{classes}")]
    Label { label: usize, classes: usize },
    #[error("k = {k} outside 1..={classes}")]
    K { k: usize, classes: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("nothing to evaluate: no samples")]
    Empty,
    #[error("inconsistent hierarchy: {0}")]
    Hierarchy(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
    #[error("plot: {0}")]
    Plot(String),
}

impl EvalError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        EvalError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Everything measured on one evaluation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Display name used in comparison tables.
    pub model: String,
    pub samples: usize,
    pub top1: f64,
    pub top5: f64,
    /// Averaging used by the headline precision/recall/F1.
    pub averaging: String,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    /// Leaf classes without support, left out of the macro averages.
    pub excluded_classes: Vec<usize>,
    pub per_class: Vec<ClassStats>,
    pub confusion: Vec<Vec<u64>>,
    /// Coarser levels, when a hierarchy was supplied.
    pub levels: Vec<LevelReport>,
}

/// Leaf-level metrics of `logits` against `labels`, plus level-1/2 rollups
/// when `hierarchy` is given.
pub fn evaluate(
    model: &str,
    logits: ArrayView2<'_, f64>,
    labels: &[usize],
    hierarchy: Option<&HierarchyTable>,
) -> Result<MetricsReport, EvalError> {
    let leaf = metrics::level_report(logits, labels, Level::L3)?;
    if !leaf.prf.excluded.is_empty() {
        log::info!(
            "{} classes without support excluded from macro averages",
            leaf.prf.excluded.len()
        );
    }
    let levels = match hierarchy {
        Some(h) => vec![
            rollup_level(logits, labels, h, Level::L1)?,
            rollup_level(logits, labels, h, Level::L2)?,
        ],
        None => Vec::new(),
    };
    let prf = leaf.prf;
    Ok(MetricsReport {
        model: model.to_string(),
        samples: labels.len(),
        top1: leaf.top1,
        top5: leaf.top5,
        averaging: "macro".into(),
        macro_precision: prf.macro_precision,
        macro_recall: prf.macro_recall,
        macro_f1: prf.macro_f1,
        weighted_precision: prf.weighted_precision,
        weighted_recall: prf.weighted_recall,
        weighted_f1: prf.weighted_f1,
        excluded_classes: prf.excluded,
        per_class: prf.per_class,
        confusion: leaf.confusion,
        levels,
    })
}
