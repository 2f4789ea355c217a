use std::path::{Path, PathBuf};

use plotters::prelude::*;

use super::EvalError;
use crate::training::RunHistory;

pub const ACCURACY_PLOT: &str = "accuracy.svg";
pub const LOSS_PLOT: &str = "loss.svg";

fn plot_err(e: impl std::fmt::Display) -> EvalError {
    EvalError::Plot(e.to_string())
}

fn draw(
    path: &Path,
    title: &str,
    y_label: &str,
    train: &[(f64, f64)],
    val: &[(f64, f64)],
) -> Result<(), EvalError> {
    let x_max = train.iter().chain(val).map(|p| p.0).fold(1.0, f64::max);
    let finite = train
        .iter()
        .chain(val)
        .map(|p| p.1)
        .filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    let (lo, hi) = if lo.is_finite() {
        (lo.min(0.0), hi.max(lo + 1e-9) * 1.05)
    } else {
        (0.0, 1.0)
    };
    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..x_max, lo..hi)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("epoch")
        .y_desc(y_label)
        .draw()
        .map_err(plot_err)?;
    for (series, colour, name) in [(train, BLUE, "train"), (val, RED, "validation")] {
        chart
            .draw_series(LineSeries::new(
                series.iter().copied(),
                colour.stroke_width(2),
            ))
            .map_err(plot_err)?
            .label(name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], colour));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// Accuracy and loss curves (train and validation per epoch) as SVG files in
/// `dir`. An empty history writes nothing and returns no paths.
pub fn write_curves(history: &RunHistory, dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    if history.is_empty() {
        return Ok(Vec::new());
    }
    let r = &history.records;
    let series = |f: fn(&crate::training::EpochRecord) -> f64| -> Vec<(f64, f64)> {
        r.iter().map(|e| ((e.epoch + 1) as f64, f(e))).collect()
    };
    let acc = dir.join(ACCURACY_PLOT);
    draw(
        &acc,
        "Classification accuracy",
        "top-1 accuracy",
        &series(|e| e.train_top1),
        &series(|e| e.val_top1),
    )?;
    let loss = dir.join(LOSS_PLOT);
    draw(
        &loss,
        "Classification loss",
        "cross-entropy",
        &series(|e| e.train_loss),
        &series(|e| e.val_loss),
    )?;
    Ok(vec![acc, loss])
}
