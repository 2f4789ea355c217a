use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{invalid, PrepError, RawImage};
use crate::par;

/// Ranges for the training-time affine augmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    /// Rotation is drawn from `[-rotation_range, rotation_range]` degrees.
    pub rotation_range: f64,
    pub zoom_range: (f64, f64),
    /// Shear angle is drawn from `[-shear_range, shear_range]` degrees.
    pub shear_range: f64,
    pub seed: u64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            rotation_range: 15.0,
            zoom_range: (0.9, 1.1),
            shear_range: 10.0,
            seed: 0,
        }
    }
}

impl AugmentParams {
    pub fn validate(&self) -> Result<(), PrepError> {
        if !(self.rotation_range >= 0.0) || !self.rotation_range.is_finite() {
            return Err(invalid("rotation_range", "must be finite and >= 0"));
        }
        if !(self.shear_range >= 0.0) || !self.shear_range.is_finite() {
            return Err(invalid("shear_range", "must be finite and >= 0"));
        }
        let (lo, hi) = self.zoom_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(invalid(
                "zoom_range",
                format!("need 0 < min <= max, got ({lo}, {hi})"),
            ));
        }
        Ok(())
    }

    /// Draws rotation, zoom and shear (in that order) from `rng`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> AffineDraw {
        let symmetric = |rng: &mut R, r: f64| {
            if r > 0.0 {
                rng.random_range(-r..=r)
            } else {
                0.0
            }
        };
        let rotation_deg = symmetric(rng, self.rotation_range);
        let (lo, hi) = self.zoom_range;
        let zoom = if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        };
        let shear_deg = symmetric(rng, self.shear_range);
        AffineDraw {
            rotation_deg,
            zoom,
            shear_deg,
        }
    }
}

/// One concrete affine warp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineDraw {
    pub rotation_deg: f64,
    /// Values above 1 enlarge the content.
    pub zoom: f64,
    pub shear_deg: f64,
}

impl AffineDraw {
    pub const IDENTITY: AffineDraw = AffineDraw {
        rotation_deg: 0.0,
        zoom: 1.0,
        shear_deg: 0.0,
    };

    /// Forward 2x2 matrix `rotation * shear * zoom`, in (x, y) pixel coordinates.
    fn forward(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let t = self.shear_deg.to_radians().tan();
        let z = self.zoom;
        // rotation [[c,-s],[s,c]] * shear [[1,t],[0,1]] * zoom diag(z,z)
        [[c * z, (c * t - s) * z], [s * z, (s * t + c) * z]]
    }

    fn inverse(&self) -> [[f64; 2]; 2] {
        let [[a, b], [c, d]] = self.forward();
        let det = a * d - b * c;
        [[d / det, -b / det], [-c / det, a / det]]
    }
}

/// Draws a warp from `rng` and applies it.
pub fn augment<R: Rng + ?Sized>(
    img: &RawImage,
    params: &AugmentParams,
    rng: &mut R,
) -> Result<RawImage, PrepError> {
    params.validate()?;
    let draw = params.draw(rng);
    Ok(warp_affine(img, draw))
}

/// Applies `draw` about the image centre with bilinear sampling and
/// edge-replicate fill. Output dimensions equal the input.
pub fn warp_affine(img: &RawImage, draw: AffineDraw) -> RawImage {
    let (w, h) = (img.width(), img.height());
    let inv = draw.inverse();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let src = img.data();
    let mut out = vec![0u8; src.len()];
    par::for_each_chunk_mut(&mut out, w * 3, |y, row| {
        let dy = y as f64 - cy;
        for x in 0..w {
            let dx = x as f64 - cx;
            let sx = (inv[0][0] * dx + inv[0][1] * dy + cx).clamp(0.0, (w - 1) as f64);
            let sy = (inv[1][0] * dx + inv[1][1] * dy + cy).clamp(0.0, (h - 1) as f64);
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            for c in 0..3 {
                let at = |yy: usize, xx: usize| f64::from(src[(yy * w + xx) * 3 + c]);
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                row[x * 3 + c] = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
            }
        }
    });
    RawImage::new(w, h, out).expect("same shape as input")
}
