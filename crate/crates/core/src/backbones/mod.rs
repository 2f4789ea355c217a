//! Pretrained-style backbones with their classifiers removed, freeze policies,
//! classification heads and the assembled model.
//!
//! Every family is described by five stages (index 0..=4):
//!
//! | family | 0 | 1 | 2 | 3 | 4 |
//! |---|---|---|---|---|---|
//! | VGG-16 | block1 | block2 | block3 | block4 | block5 |
//! | ResNet | stem (conv1, pool1) | conv2_x | conv3_x | conv4_x | conv5_x |
//! | DenseNet-121 | stem (conv1, pool1) | conv2 + pool2 | conv3 + pool3 | conv4 + pool4 | conv5 + final bn |
//!
//! `last_stage_only` trains stage 4.

mod assembly;
mod build;
mod freeze;
mod head;
mod weights;

pub use assembly::{build_plan, AssemblySpec, ModelAssembly, TrainPass, MIN_INPUT_SIZE};
pub use build::{build_backbone, Backbone};
pub use freeze::{apply_freeze, FreezePolicy};
pub use head::{
    build_head, HeadBlockSpec, HeadConfig, DROPOUT_CHOICES, MAX_HEAD_BLOCKS, NUM_CLASSES,
    UNITS_CHOICES,
};
pub use weights::{file_sha256, load_backbone, WeightManifest, WeightSource};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown backbone family `{0}` (expected vgg16, resnet50, resnet101 or densenet121)")]
    UnknownFamily(String),
    #[error("invalid freeze policy: {0}")]
    Freeze(String),
    #[error("invalid head: {0}")]
    Head(String),
    #[error("weights: {0}")]
    Weights(String),
    #[error("weights: parameter count {found} does not match the {family} manifest ({expected})")]
    CountMismatch {
        family: String,
        expected: usize,
        found: usize,
    },
    #[error("weights: checksum mismatch for {path} (expected {expected}, found {found})")]
    Checksum {
        path: String,
        expected: String,
        found: String,
    },
    #[error("input shape {found:?} does not match the expected {expected}")]
    Shape { expected: String, found: Vec<usize> },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Vgg16,
    Resnet50,
    Resnet101,
    Densenet121,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Vgg16,
        Family::Resnet50,
        Family::Resnet101,
        Family::Densenet121,
    ];

    /// Identifier used in configs and manifests.
    pub fn id(self) -> &'static str {
        match self {
            Family::Vgg16 => "vgg16",
            Family::Resnet50 => "resnet50",
            Family::Resnet101 => "resnet101",
            Family::Densenet121 => "densenet121",
        }
    }

    /// Name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Family::Vgg16 => "VGG-16",
            Family::Resnet50 => "ResNet-50",
            Family::Resnet101 => "ResNet-101",
            Family::Densenet121 => "DenseNet-121",
        }
    }

    /// Expected `(learnable, running-statistics)` scalar counts of the full
    /// architecture without classifier.
    pub fn manifest_counts(self) -> (usize, usize) {
        match self {
            Family::Vgg16 => (14_714_688, 0),
            Family::Resnet50 => (23_534_592, 53_120),
            Family::Resnet101 => (42_552_832, 105_344),
            Family::Densenet121 => (6_953_856, 83_648),
        }
    }

    /// Width of the pooled feature vector of the full architecture.
    pub fn feature_dim(self) -> usize {
        match self {
            Family::Vgg16 => 512,
            Family::Resnet50 | Family::Resnet101 => 2048,
            Family::Densenet121 => 1024,
        }
    }

    /// Default freeze policy when none is configured.
    pub fn default_freeze(self) -> FreezePolicy {
        match self {
            Family::Vgg16 => FreezePolicy::LastNLayers(5),
            _ => FreezePolicy::FullFinetune,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Family {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .collect::<String>()
            .to_ascii_lowercase();
        Family::ALL
            .into_iter()
            .find(|f| f.id() == key)
            .ok_or_else(|| ModelError::UnknownFamily(s.to_string()))
    }
}

/// Depth/width reduction of an architecture. `FULL` is the published network;
/// reduced variants keep the five-stage table but divide every width by
/// `width_divisor` and keep at most `max_blocks` repeated units per stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchVariant {
    pub width_divisor: usize,
    pub max_blocks: Option<usize>,
}

impl ArchVariant {
    pub const FULL: ArchVariant = ArchVariant {
        width_divisor: 1,
        max_blocks: None,
    };

    /// Small variant used for desk-scale runs on 32×32 inputs.
    pub const STUB: ArchVariant = ArchVariant {
        width_divisor: 16,
        max_blocks: Some(2),
    };

    pub fn is_full(&self) -> bool {
        *self == Self::FULL
    }

    pub(crate) fn width(&self, w: usize) -> usize {
        (w / self.width_divisor).max(1)
    }

    pub(crate) fn blocks(&self, n: usize) -> usize {
        self.max_blocks.map_or(n, |m| n.min(m.max(1)))
    }
}

impl Default for ArchVariant {
    fn default() -> Self {
        Self::FULL
    }
}

/// Which family and which published parameter set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub family: Family,
    /// `seeded:<n>` or the path of a weight manifest file.
    pub weights: String,
    #[serde(default)]
    pub variant: ArchVariant,
}

impl BackboneSpec {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            weights: "seeded:0".into(),
            variant: ArchVariant::FULL,
        }
    }
}
