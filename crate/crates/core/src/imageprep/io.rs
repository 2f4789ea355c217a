use std::path::Path;

use super::{PrepError, RawImage};

/// Decodes any supported format and converts to 8-bit RGB.
pub fn load_image(path: &Path) -> Result<RawImage, PrepError> {
    let decoded = image::open(path).map_err(|source| PrepError::Decode {
        path: path.display().to_string(),
        source,
    })?;
    let rgb = decoded.into_rgb8();
    let (w, h) = rgb.dimensions();
    RawImage::new(w as usize, h as usize, rgb.into_raw())
}

/// Writes a lossless PNG.
pub fn save_png(img: &RawImage, path: &Path) -> Result<(), PrepError> {
    image::save_buffer_with_format(
        path,
        img.data(),
        img.width() as u32,
        img.height() as u32,
        image::ExtendedColorType::Rgb8,
        image::ImageFormat::Png,
    )
    .map_err(|source| PrepError::Encode {
        path: path.display().to_string(),
        source,
    })
}
