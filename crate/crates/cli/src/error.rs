use asana_core::backbones::ModelError;
use asana_core::dataset::DatasetError;
use asana_core::evalreport::EvalError;
use asana_core::imageprep::PrepError;
use asana_core::training::TrainError;
use asana_core::tuner::TuneError;

use crate::config::ConfigError;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_TRAINING: u8 = 4;
pub const EXIT_IO: u8 = 5;

/// An error with the exit code it maps to and the module it came from.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub module: &'static str,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}", self.module, self.message)
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn new(code: u8, module: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            module,
            message: message.into(),
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        Self::new(EXIT_IO, "cli", format!("{}: {e}", path.display()))
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::new(EXIT_CONFIG, "config", e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        let code = if matches!(e, DatasetError::Io { .. }) {
            EXIT_IO
        } else {
            EXIT_DATA
        };
        Self::new(code, "dataset", e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let code = match e {
            ModelError::UnknownFamily(_) | ModelError::Freeze(_) | ModelError::Head(_) => {
                EXIT_CONFIG
            }
            ModelError::Io { .. } => EXIT_IO,
            ModelError::Shape { .. } => EXIT_TRAINING,
            _ => EXIT_DATA,
        };
        Self::new(code, "backbones", e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Model(m) => m.into(),
            TrainError::Data(d) => d.into(),
            TrainError::Config { .. } => Self::new(EXIT_CONFIG, "training", e.to_string()),
            TrainError::EmptySplit(_) | TrainError::Label { .. } => {
                Self::new(EXIT_DATA, "training", e.to_string())
            }
            TrainError::Io { .. } | TrainError::Checkpoint(_) | TrainError::Version { .. } => {
                Self::new(EXIT_IO, "training", e.to_string())
            }
            TrainError::NonFinite { .. } | TrainError::NoTrainable | TrainError::Shape(_) => {
                Self::new(EXIT_TRAINING, "training", e.to_string())
            }
        }
    }
}

impl From<TuneError> for CliError {
    fn from(e: TuneError) -> Self {
        match e {
            TuneError::Trial { id, source } => {
                let mut c = CliError::from(source);
                c.message = format!("trial {id}: {}", c.message);
                c
            }
            TuneError::File { .. } => Self::new(EXIT_IO, "tuner", e.to_string()),
            _ => Self::new(EXIT_CONFIG, "tuner", e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let code = if matches!(e, EvalError::Io { .. }) {
            EXIT_IO
        } else {
            EXIT_DATA
        };
        Self::new(code, "evalreport", e.to_string())
    }
}

impl From<PrepError> for CliError {
    fn from(e: PrepError) -> Self {
        let code = match &e {
            PrepError::InvalidParam { name, .. } if matches!(*name, "path" | "output") => EXIT_IO,
            PrepError::InvalidParam { .. } => EXIT_CONFIG,
            PrepError::Encode { .. } => EXIT_IO,
            _ => EXIT_DATA,
        };
        Self::new(code, "imageprep", e.to_string())
    }
}
