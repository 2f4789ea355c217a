//! Seeded blob images for desk-scale runs: each class is a colored disc at a
//! class-specific place on a noisy background.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::dataset::{LabeledSample, MemorySource, L3_CLASSES};
use crate::imageprep::{save_png, RawImage};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlobSpec {
    pub classes: usize,
    pub per_class: usize,
    /// Side length of the square images.
    pub size: usize,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            classes: 3,
            per_class: 10,
            size: 32,
            seed: 0,
        }
    }
}

/// Parent labels used for synthetic leaf class `l3`: `(l1, l2)`.
pub fn parents(l3: usize) -> (usize, usize) {
    let l2 = l3 / 5;
    (l2 / 4, l2)
}

fn class_colour(class: usize, classes: usize) -> [f64; 3] {
    // evenly spaced hues at full saturation
    let h = class as f64 / classes as f64 * 6.0;
    let x = 1.0 - ((h % 2.0) - 1.0).abs();
    let (r, g, b) = match h as usize {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [r * 230.0, g * 230.0, b * 230.0]
}

/// One image of `class`, variant `index`.
pub fn blob_image(spec: &BlobSpec, class: usize, index: usize) -> RawImage {
    let mut rng = seed::rng(spec.seed, &[class as u64, index as u64]);
    let s = spec.size as f64;
    let angle = class as f64 / spec.classes as f64 * std::f64::consts::TAU;
    let jitter = s / 10.0;
    let cx = s / 2.0 + s / 5.0 * angle.cos() + rng.random_range(-jitter..=jitter);
    let cy = s / 2.0 + s / 5.0 * angle.sin() + rng.random_range(-jitter..=jitter);
    let radius = s / 5.0 * rng.random_range(0.8..1.2);
    let colour = class_colour(class, spec.classes);
    let noise: Vec<f64> = (0..spec.size * spec.size * 3)
        .map(|_| rng.random_range(-20.0..20.0))
        .collect();
    RawImage::from_fn(spec.size, spec.size, |x, y| {
        let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
        let inside = dx * dx + dy * dy <= radius * radius;
        std::array::from_fn(|c| {
            let base = if inside { colour[c] } else { 60.0 };
            (base + noise[(y * spec.size + x) * 3 + c])
                .round()
                .clamp(0.0, 255.0) as u8
        })
    })
}

fn image_path(class: usize, index: usize) -> String {
    format!("class{class:02}/img{index:03}.png")
}

/// Samples (ids in class-major order) and their images.
pub fn blob_dataset(spec: &BlobSpec) -> (Vec<LabeledSample>, MemorySource) {
    assert!(
        spec.classes >= 1 && spec.classes <= L3_CLASSES,
        "1..=82 classes"
    );
    let mut samples = Vec::with_capacity(spec.classes * spec.per_class);
    let mut source = MemorySource::new();
    for class in 0..spec.classes {
        for index in 0..spec.per_class {
            let path = image_path(class, index);
            let (l1, l2) = parents(class);
            source.insert(path.clone(), blob_image(spec, class, index));
            samples.push(LabeledSample {
                id: samples.len(),
                image_path: path,
                l1,
                l2,
                l3: class,
            });
        }
    }
    (samples, source)
}

/// Writes the images as PNG under `dir` plus a `manifest.csv`; returns the
/// manifest path.
pub fn write_blob_dataset(dir: &Path, spec: &BlobSpec) -> std::io::Result<PathBuf> {
    let (samples, source) = blob_dataset(spec);
    let mut manifest = String::new();
    for s in &samples {
        let path = dir.join(&s.image_path);
        std::fs::create_dir_all(path.parent().expect("nested path"))?;
        let img = crate::dataset::ImageSource::load(&source, s).expect("generated above");
        save_png(&img, &path).map_err(std::io::Error::other)?;
        let _ = writeln!(manifest, "{},{},{},{}", s.image_path, s.l1, s.l2, s.l3);
    }
    let out = dir.join("manifest.csv");
    std::fs::write(&out, manifest)?;
    Ok(out)
}
