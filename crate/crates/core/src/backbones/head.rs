use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::nn::{HeadNet, Plan};

pub const NUM_CLASSES: usize = 82;
pub const MAX_HEAD_BLOCKS: usize = 3;
/// Hidden widths the tuner may draw.
pub const UNITS_CHOICES: [usize; 4] = [128, 256, 512, 1024];
/// Dropout rates the tuner may draw.
pub const DROPOUT_CHOICES: [f64; 3] = [0.0, 0.2, 0.5];

/// Hidden block: dense(units) → ReLU → dropout(rate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadBlockSpec {
    pub units: usize,
    pub dropout: f64,
}

/// Global average pooling, then `blocks`, then dense(output_classes) logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub blocks: Vec<HeadBlockSpec>,
    pub output_classes: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            blocks: Vec::new(),
            output_classes: NUM_CLASSES,
        }
    }
}

impl HeadConfig {
    pub fn with_blocks(blocks: &[(usize, f64)]) -> Self {
        Self {
            blocks: blocks
                .iter()
                .map(|&(units, dropout)| HeadBlockSpec { units, dropout })
                .collect(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.blocks.len() > MAX_HEAD_BLOCKS {
            return Err(ModelError::Head(format!(
                "{} hidden blocks (at most {MAX_HEAD_BLOCKS})",
                self.blocks.len()
            )));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.units == 0 {
                return Err(ModelError::Head(format!("block {i} has zero units")));
            }
            if !(0.0..1.0).contains(&b.dropout) {
                return Err(ModelError::Head(format!(
                    "block {i} dropout {} outside [0, 1)",
                    b.dropout
                )));
            }
        }
        if self.output_classes == 0 {
            return Err(ModelError::Head("output_classes must be positive".into()));
        }
        Ok(())
    }

    /// Learnable scalars of the head on top of `feature_dim` pooled features.
    pub fn parameter_count(&self, feature_dim: usize) -> usize {
        let mut width = feature_dim;
        let mut total = 0;
        for b in &self.blocks {
            total += width * b.units + b.units;
            width = b.units;
        }
        total + width * self.output_classes + self.output_classes
    }

    /// Compact form like `512@0.2-256@0` (empty string for no hidden blocks).
    pub fn describe(&self) -> String {
        self.blocks
            .iter()
            .map(|b| format!("{}@{}", b.units, b.dropout))
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// Registers the head in `plan` on top of `feature_dim` pooled features.
pub fn build_head(
    config: &HeadConfig,
    feature_dim: usize,
    plan: &mut Plan,
) -> Result<HeadNet, ModelError> {
    config.validate()?;
    if feature_dim == 0 {
        return Err(ModelError::Head("feature_dim must be positive".into()));
    }
    let blocks: Vec<(usize, f64)> = config.blocks.iter().map(|b| (b.units, b.dropout)).collect();
    Ok(HeadNet::register(
        plan,
        feature_dim,
        &blocks,
        config.output_classes,
    ))
}
