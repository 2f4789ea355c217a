use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use super::TrainError;

/// Probability clamp of the cross-entropy.
pub const CE_EPS: f64 = 1e-7;

/// Clamped log-probability of `label` in one row of logits, and whether the
/// clamp was active.
fn clamped_log_prob(row: ArrayView1<'_, f64>, label: usize) -> (f64, bool) {
    let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    let lp = row[label] - lse;
    let (lo, hi) = (CE_EPS.ln(), (-CE_EPS).ln_1p());
    if lp < lo {
        (lo, true)
    } else if lp > hi {
        (hi, true)
    } else {
        (lp, false)
    }
}

fn check_labels(logits: &ArrayView2<'_, f64>, labels: &[usize]) -> Result<(), TrainError> {
    let (b, c) = logits.dim();
    if labels.len() != b {
        return Err(TrainError::Shape(format!(
            "{} labels for {b} logit rows",
            labels.len()
        )));
    }
    if b == 0 {
        return Err(TrainError::Shape("empty batch".into()));
    }
    match labels.iter().find(|&&l| l >= c) {
        Some(&l) => Err(TrainError::Label {
            label: l,
            classes: c,
        }),
        None => Ok(()),
    }
}

/// Mean of `−log clamp(softmax(logits)[label], ε, 1−ε)` over the batch.
pub fn cross_entropy(logits: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64, TrainError> {
    check_labels(&logits, labels)?;
    let total: f64 = logits
        .axis_iter(Axis(0))
        .zip(labels)
        .map(|(row, &l)| -clamped_log_prob(row, l).0)
        .sum();
    Ok(total / labels.len() as f64)
}

/// Loss and its gradient with respect to the logits. Rows whose probability is
/// clamped contribute no gradient.
pub fn cross_entropy_grad(
    logits: ArrayView2<'_, f64>,
    labels: &[usize],
) -> Result<(f64, Array2<f64>), TrainError> {
    check_labels(&logits, labels)?;
    let b = labels.len() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = 0.0;
    for ((row, mut g), &l) in logits
        .axis_iter(Axis(0))
        .zip(grad.axis_iter_mut(Axis(0)))
        .zip(labels)
    {
        let (lp, clamped) = clamped_log_prob(row, l);
        total -= lp;
        if !clamped {
            let m = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
            let e = row.mapv(|v| (v - m).exp());
            let z = e.sum();
            g.assign(&(e / (z * b)));
            g[l] -= 1.0 / b;
        }
    }
    Ok((total / b, grad))
}

/// Index of the largest logit per row (lowest index among ties).
pub fn argmax_rows(logits: ArrayView2<'_, f64>) -> Vec<usize> {
    logits
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
