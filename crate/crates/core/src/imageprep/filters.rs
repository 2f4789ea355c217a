use super::{invalid, PrepError, RawImage};
use crate::par;

/// BT.601 luma weights for R, G, B.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Unit-sum Laplacian sharpening kernel, row-major.
pub const SHARPEN_KERNEL: [[i32; 3]; 3] = [[0, -1, 0], [-1, 5, -1], [0, -1, 0]];

/// Image-wide mean of the BT.601 luma.
pub fn mean_luma(img: &RawImage) -> f64 {
    let sum: f64 = img
        .data()
        .chunks_exact(3)
        .map(|p| {
            LUMA_WEIGHTS[0] * f64::from(p[0])
                + LUMA_WEIGHTS[1] * f64::from(p[1])
                + LUMA_WEIGHTS[2] * f64::from(p[2])
        })
        .sum();
    sum / (img.width() * img.height()) as f64
}

/// Linear contrast stretch around the mean luma.
///
/// Each channel value `p` becomes `clamp(round(m + factor * (p - m)), 0, 255)`.
/// The mapping only depends on `p`, so it is applied through a 256-entry table.
pub fn enhance_contrast(img: &RawImage, factor: f64) -> Result<RawImage, PrepError> {
    if !(factor >= 0.0) || !factor.is_finite() {
        return Err(invalid(
            "contrast factor",
            format!("{factor} must be finite and >= 0"),
        ));
    }
    let mean = mean_luma(img);
    let mut lut = [0u8; 256];
    for (p, slot) in lut.iter_mut().enumerate() {
        *slot = (mean + factor * (p as f64 - mean))
            .round()
            .clamp(0.0, 255.0) as u8;
    }
    let data = img.data().iter().map(|&v| lut[v as usize]).collect();
    RawImage::new(img.width(), img.height(), data)
}

#[inline(always)]
fn sort2(p: &mut [u8; 9], a: usize, b: usize) {
    if p[a] > p[b] {
        p.swap(a, b);
    }
}

/// Median of nine values with a fixed 19-exchange network.
#[inline]
fn median9(mut p: [u8; 9]) -> u8 {
    sort2(&mut p, 1, 2);
    sort2(&mut p, 4, 5);
    sort2(&mut p, 7, 8);
    sort2(&mut p, 0, 1);
    sort2(&mut p, 3, 4);
    sort2(&mut p, 6, 7);
    sort2(&mut p, 1, 2);
    sort2(&mut p, 4, 5);
    sort2(&mut p, 7, 8);
    sort2(&mut p, 0, 3);
    sort2(&mut p, 5, 8);
    sort2(&mut p, 4, 7);
    sort2(&mut p, 3, 6);
    sort2(&mut p, 1, 4);
    sort2(&mut p, 2, 5);
    sort2(&mut p, 4, 7);
    sort2(&mut p, 4, 2);
    sort2(&mut p, 6, 4);
    sort2(&mut p, 4, 2);
    p[4]
}

/// Applies `op` to every 3x3 neighbourhood (edge replicated), one row per task.
fn neighbourhood_map(
    img: &RawImage,
    op: impl Fn(&[u8; 9]) -> u8 + Sync + Send,
) -> Result<RawImage, PrepError> {
    img.require_filterable()?;
    let (w, h) = (img.width(), img.height());
    let src = img.data();
    let mut out = vec![0u8; src.len()];
    par::for_each_chunk_mut(&mut out, w * 3, |y, row| {
        let rows = [y.saturating_sub(1), y, (y + 1).min(h - 1)];
        let mut win = [0u8; 9];
        for x in 0..w {
            let cols = [x.saturating_sub(1), x, (x + 1).min(w - 1)];
            for c in 0..3 {
                for (ky, &yy) in rows.iter().enumerate() {
                    let base = yy * w;
                    for (kx, &xx) in cols.iter().enumerate() {
                        win[ky * 3 + kx] = src[(base + xx) * 3 + c];
                    }
                }
                row[x * 3 + c] = op(&win);
            }
        }
    });
    RawImage::new(w, h, out)
}

/// Per-channel 3x3 median with edge replication.
pub fn median_filter3(img: &RawImage) -> Result<RawImage, PrepError> {
    neighbourhood_map(img, |win| median9(*win))
}

/// Per-channel 3x3 convolution with [`SHARPEN_KERNEL`], edge replicated, clamped.
pub fn sharpen(img: &RawImage) -> Result<RawImage, PrepError> {
    neighbourhood_map(img, |win| {
        let v = 5 * i32::from(win[4])
            - i32::from(win[1])
            - i32::from(win[3])
            - i32::from(win[5])
            - i32::from(win[7]);
        v.clamp(0, 255) as u8
    })
}
