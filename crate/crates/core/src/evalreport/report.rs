use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{write_curves, EvalError, MetricsReport};
use crate::training::RunHistory;

pub const METRICS_FILE: &str = "metrics.json";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const TABLE_FILE: &str = "table.txt";
pub const TABLE_NOTE: &str =
    "# precision, recall and f1 are macro averages over classes with support";
pub const TABLE_HEADER: &str = "model, top-1 %, top-5 %, precision, recall, f1";

/// One line of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub model: String,
    /// Fractions in [0, 1].
    pub top1: f64,
    pub top5: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<&MetricsReport> for TableRow {
    fn from(r: &MetricsReport) -> Self {
        Self {
            model: r.model.clone(),
            top1: r.top1,
            top5: r.top5,
            precision: r.macro_precision,
            recall: r.macro_recall,
            f1: r.macro_f1,
        }
    }
}

/// Accuracies as whole percentages, precision/recall/F1 with two decimals.
pub fn format_row(row: &TableRow) -> String {
    format!(
        "{}, {:.0}, {:.0}, {:.2}, {:.2}, {:.2}",
        row.model,
        row.top1 * 100.0,
        row.top5 * 100.0,
        row.precision,
        row.recall,
        row.f1
    )
}

fn table(rows: &[TableRow]) -> String {
    let mut out = format!("{TABLE_NOTE}\n{TABLE_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{}", format_row(r));
    }
    out
}

fn write(path: &Path, text: &str) -> Result<(), EvalError> {
    std::fs::write(path, text).map_err(|e| EvalError::io(path, e))
}

pub fn write_metrics(report: &MetricsReport, path: &Path) -> Result<(), EvalError> {
    let text = serde_json::to_string_pretty(report).map_err(|e| EvalError::Format {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    write(path, &text)
}

pub fn read_metrics(path: &Path) -> Result<MetricsReport, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| EvalError::Format {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn confusion_csv(confusion: &[Vec<u64>]) -> String {
    let mut out = String::from("true\\pred");
    for j in 0..confusion.len() {
        let _ = write!(out, ",{j}");
    }
    out.push('\n');
    for (i, row) in confusion.iter().enumerate() {
        let _ = write!(out, "{i}");
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Files written by [`emit_report`] and anything worth telling the user.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmitSummary {
    pub files: Vec<PathBuf>,
    pub notices: Vec<String>,
}

/// Writes the metrics record, confusion CSV, a one-row comparison table and
/// the training curves into `dir`.
pub fn emit_report(
    report: &MetricsReport,
    history: &RunHistory,
    dir: &Path,
) -> Result<EmitSummary, EvalError> {
    std::fs::create_dir_all(dir).map_err(|e| EvalError::io(dir, e))?;
    let mut summary = EmitSummary::default();
    let metrics = dir.join(METRICS_FILE);
    write_metrics(report, &metrics)?;
    summary.files.push(metrics);
    let confusion = dir.join(CONFUSION_FILE);
    write(&confusion, &confusion_csv(&report.confusion))?;
    summary.files.push(confusion);
    let tab = dir.join(TABLE_FILE);
    write(&tab, &table(&[TableRow::from(report)]))?;
    summary.files.push(tab);
    if history.is_empty() {
        summary
            .notices
            .push("training history is empty; accuracy and loss curves omitted".into());
    } else {
        summary.files.extend(write_curves(history, dir)?);
    }
    for n in &summary.notices {
        log::warn!("{n}");
    }
    Ok(summary)
}

/// Locates the metrics record of `path`: the file itself, `path/metrics.json`,
/// or exactly one `metrics.json` one level down.
fn metrics_path(path: &Path) -> Result<PathBuf, EvalError> {
    if path.is_file() {
        return Ok(path.to_path_buf());
    }
    let direct = path.join(METRICS_FILE);
    if direct.is_file() {
        return Ok(direct);
    }
    let nested: Vec<PathBuf> = walkdir::WalkDir::new(path)
        .min_depth(2)
        .max_depth(2)
        .sort_by_file_name()
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_name() == METRICS_FILE)
        .map(|e| e.into_path())
        .collect();
    match nested.as_slice() {
        [one] => Ok(one.clone()),
        [] => Err(EvalError::io(
            &direct,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no metrics record found"),
        )),
        _ => Err(EvalError::Format {
            path: path.display().to_string(),
            reason: format!("{} metrics records found; name one", nested.len()),
        }),
    }
}

/// Comparison table over several stored metric records, in argument order.
pub fn aggregate_reports(paths: &[PathBuf]) -> Result<String, EvalError> {
    let rows = paths
        .iter()
        .map(|p| read_metrics(&metrics_path(p)?).map(|r| TableRow::from(&r)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(table(&rows))
}
