//! Optimization loop: cross-entropy, Adam, exponential lr decay, early
//! stopping on validation loss, checkpoints and run history.

mod checkpoint;
mod fit;
mod history;
mod learner;
mod loss;
mod optim;

pub use checkpoint::{
    checkpoint_spec, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION, HISTORY_FILE,
    MODEL_FILE, TENSORS_FILE,
};
pub use fit::{fit, EarlyStopping, EpochStats, FitOutcome, Learner};
pub use history::{EpochRecord, RunHistory, HISTORY_HEADER};
pub use learner::{predict, ModelLearner};
pub use loss::{argmax_rows, cross_entropy, cross_entropy_grad, CE_EPS};
pub use optim::{lr_schedule, Adam};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backbones::ModelError;
use crate::dataset::DatasetError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config `{key}`: {reason}")]
    Config { key: &'static str, reason: String },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("no trainable parameters: the freeze policy leaves every parameter frozen")]
    NoTrainable,
    #[error("non-finite {phase} loss at epoch {epoch}{}", batch.map(|b| format!(", batch {b}")).unwrap_or_default())]
    NonFinite {
        epoch: usize,
        batch: Option<usize>,
        phase: &'static str,
    },
    #[error("label {label} outside 0..{classes}")]
    Label { label: usize, classes: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DatasetError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
}

impl TrainError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        TrainError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    #[default]
    ValLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    /// Per-epoch multiplicative lr factor.
    pub decay_gamma: f64,
    pub patience: usize,
    /// Improvement must beat the best value by more than this.
    pub min_delta: f64,
    pub seed: u64,
    pub monitor: Monitor,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 500,
            batch_size: 256,
            lr0: 0.01,
            decay_gamma: 0.95,
            patience: 15,
            min_delta: 1e-6,
            seed: 0,
            monitor: Monitor::ValLoss,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let err = |key, reason: &str| {
            Err(TrainError::Config {
                key,
                reason: reason.into(),
            })
        };
        if self.max_epochs < 1 {
            return err("max_epochs", "must be >= 1");
        }
        if self.batch_size < 1 {
            return err("batch_size", "must be >= 1");
        }
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return err("lr0", "must be a positive number");
        }
        if !(self.decay_gamma > 0.0 && self.decay_gamma <= 1.0) {
            return err("decay_gamma", "must lie in (0, 1]");
        }
        if self.patience < 1 {
            return err("patience", "must be >= 1");
        }
        if !(self.min_delta.is_finite() && self.min_delta >= 0.0) {
            return err("min_delta", "must be a non-negative number");
        }
        Ok(())
    }
}
