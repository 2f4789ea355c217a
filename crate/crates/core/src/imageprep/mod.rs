//! Image conditioning: the enhancement chain applied before a backbone sees an
//! image, plus the random affine augmentation used while training.
//!
//! Every stage works on [`RawImage`], an interleaved 8-bit RGB raster. Stages are
//! pure functions; rows are processed in parallel when the `parallel` feature is
//! on, with identical output either way.

mod augment;
mod filters;
mod io;
mod prepare;
mod resize;

pub use augment::{augment, warp_affine, AffineDraw, AugmentParams};
pub use filters::{
    enhance_contrast, mean_luma, median_filter3, sharpen, LUMA_WEIGHTS, SHARPEN_KERNEL,
};
pub use io::{load_image, save_png};
pub use prepare::{prepare_dir, prepared_path, PrepareSummary, PreparedFile, PREPARE_MANIFEST};
pub use resize::resize_bilinear;

use ndarray::Array3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// ImageNet channel statistics used by the published pretrained weights.
pub const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

#[derive(Debug, Error)]
pub enum PrepError {
    #[error("image is {width}x{height}; filters need at least 3x3")]
    TooSmall { width: usize, height: usize },
    #[error("invalid {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },
    #[error("raster holds {actual} bytes, expected {expected} for {width}x{height} RGB")]
    BadRaster {
        width: usize,
        height: usize,
        expected: usize,
        actual: usize,
    },
    #[error("cannot read image {path}: {source}")]
    Decode {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("cannot write image {path}: {source}")]
    Encode {
        path: String,
        #[source]
        source: image::ImageError,
    },
}

fn invalid(name: &'static str, reason: impl Into<String>) -> PrepError {
    PrepError::InvalidParam {
        name,
        reason: reason.into(),
    }
}

/// Interleaved RGB raster, row-major, 8 bits per channel.
#[derive(Clone, PartialEq, Eq)]
pub struct RawImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for RawImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RawImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl RawImage {
    pub const CHANNELS: usize = 3;

    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, PrepError> {
        let expected = width * height * Self::CHANNELS;
        if data.len() != expected || width == 0 || height == 0 {
            return Err(PrepError::BadRaster {
                width,
                height,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width * height * 3)
            .collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub(crate) fn require_filterable(&self) -> Result<(), PrepError> {
        if self.width < 3 || self.height < 3 {
            return Err(PrepError::TooSmall {
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }
}

/// Parameters of the enhancement chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepParams {
    pub contrast_factor: f64,
    pub sharpen_enabled: bool,
    /// When false only the resize runs; used for inputs already written by `prepare`.
    pub enhance: bool,
    pub target_size: usize,
    pub normalize_mean: [f64; 3],
    pub normalize_std: [f64; 3],
}

impl PrepParams {
    /// Side of the median window. Not configurable.
    pub const MEDIAN_KERNEL: usize = 3;

    pub fn validate(&self) -> Result<(), PrepError> {
        if !(self.contrast_factor >= 0.0) || !self.contrast_factor.is_finite() {
            return Err(invalid(
                "contrast_factor",
                format!("{} must be finite and >= 0", self.contrast_factor),
            ));
        }
        if self.target_size == 0 {
            return Err(invalid("target_size", "must be > 0"));
        }
        if self.normalize_std.iter().any(|s| !(*s > 0.0)) {
            return Err(invalid("normalize_std", "every component must be > 0"));
        }
        Ok(())
    }
}

impl Default for PrepParams {
    fn default() -> Self {
        Self {
            contrast_factor: 1.5,
            sharpen_enabled: true,
            enhance: true,
            target_size: 224,
            normalize_mean: IMAGENET_MEAN,
            normalize_std: IMAGENET_STD,
        }
    }
}

/// Contrast, then 3x3 median, then (optionally) sharpen, then bilinear resize to
/// `target_size` square.
pub fn preprocess(img: &RawImage, params: &PrepParams) -> Result<RawImage, PrepError> {
    params.validate()?;
    let enhanced = if params.enhance {
        let contrasted = enhance_contrast(img, params.contrast_factor)?;
        let denoised = median_filter3(&contrasted)?;
        if params.sharpen_enabled {
            sharpen(&denoised)?
        } else {
            denoised
        }
    } else {
        img.clone()
    };
    Ok(resize_bilinear(
        &enhanced,
        params.target_size,
        params.target_size,
    ))
}

/// Converts to a float tensor of shape `(height, width, 3)` (HWC):
/// `(intensity / 255 - mean[c]) / std[c]`.
pub fn to_tensor(img: &RawImage, mean: [f64; 3], std: [f64; 3]) -> Array3<f64> {
    let mut out = Array3::<f64>::zeros((img.height, img.width, 3));
    let dst = out.as_slice_mut().expect("fresh array is contiguous");
    for (i, (d, &v)) in dst.iter_mut().zip(&img.data).enumerate() {
        let c = i % 3;
        *d = (f64::from(v) / 255.0 - mean[c]) / std[c];
    }
    out
}
