use std::collections::HashMap;
use std::path::PathBuf;

use super::LabeledSample;
use crate::imageprep::{load_image, PrepError, RawImage};

/// Where sample pixels come from.
pub trait ImageSource: Send + Sync {
    fn load(&self, sample: &LabeledSample) -> Result<RawImage, PrepError>;
}

/// Images on disk under a root directory.
#[derive(Debug, Clone)]
pub struct FsSource {
    pub root: PathBuf,
}

impl FsSource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
}

impl ImageSource for FsSource {
    fn load(&self, sample: &LabeledSample) -> Result<RawImage, PrepError> {
        load_image(&self.root.join(&sample.image_path))
    }
}

/// In-memory images keyed by `image_path`.
#[derive(Debug, Clone, Default)]
pub struct MemorySource {
    images: HashMap<String, RawImage>,
}

impl MemorySource {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, path: impl Into<String>, img: RawImage) {
        self.images.insert(path.into(), img);
    }
}

impl FromIterator<(String, RawImage)> for MemorySource {
    fn from_iter<T: IntoIterator<Item = (String, RawImage)>>(iter: T) -> Self {
        Self {
            images: iter.into_iter().collect(),
        }
    }
}

impl ImageSource for MemorySource {
    fn load(&self, sample: &LabeledSample) -> Result<RawImage, PrepError> {
        self.images
            .get(&sample.image_path)
            .cloned()
            .ok_or_else(|| PrepError::Decode {
                path: sample.image_path.clone(),
                source: image::ImageError::IoError(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    "no such in-memory image",
                )),
            })
    }
}
