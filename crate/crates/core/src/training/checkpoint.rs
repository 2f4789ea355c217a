use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RunHistory, TrainError};
use crate::backbones::{AssemblySpec, Family, ModelAssembly};
use crate::tensorio;

pub const CHECKPOINT_VERSION: u32 = 1;
pub const TENSORS_FILE: &str = "tensors.safetensors";
pub const MODEL_FILE: &str = "model.toml";
pub const HISTORY_FILE: &str = "history.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelRecord {
    format_version: u32,
    producer: String,
    spec: AssemblySpec,
}

/// Writes parameters, buffers, the structural record and the history into `dir`.
pub fn save_checkpoint(
    dir: &Path,
    model: &ModelAssembly,
    history: &RunHistory,
) -> Result<(), TrainError> {
    std::fs::create_dir_all(dir).map_err(|e| TrainError::io(dir, e))?;
    let plan = model.plan();
    let store = model.store();
    let mut named: Vec<(String, &ndarray::ArrayD<f64>)> =
        Vec::with_capacity(plan.params.len() + plan.buffers.len());
    named.extend(
        plan.params
            .iter()
            .zip(store.values())
            .map(|(p, v)| (p.name.clone(), v)),
    );
    named.extend(
        plan.buffers
            .iter()
            .zip(store.buffers())
            .map(|(b, v)| (b.name.clone(), v)),
    );
    tensorio::save_tensors(&dir.join(TENSORS_FILE), &named)
        .map_err(|e| TrainError::Checkpoint(e.to_string()))?;
    let record = ModelRecord {
        format_version: CHECKPOINT_VERSION,
        producer: format!("asana {}", env!("CARGO_PKG_VERSION")),
        spec: model.spec().clone(),
    };
    let text = toml::to_string(&record).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
    let path = dir.join(MODEL_FILE);
    std::fs::write(&path, text).map_err(|e| TrainError::io(&path, e))?;
    history.save(&dir.join(HISTORY_FILE))
}

/// Reads the structural record of a checkpoint.
pub fn checkpoint_spec(dir: &Path) -> Result<AssemblySpec, TrainError> {
    let path = dir.join(MODEL_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| TrainError::io(&path, e))?;
    let record: ModelRecord = toml::from_str(&text)
        .map_err(|e| TrainError::Checkpoint(format!("{}: {e}", path.display())))?;
    if record.format_version != CHECKPOINT_VERSION {
        return Err(TrainError::Version {
            found: record.format_version,
            expected: CHECKPOINT_VERSION,
        });
    }
    Ok(record.spec)
}

/// Rebuilds the model and history saved in `dir`. With `expect_family`, a
/// checkpoint of another family is refused.
pub fn load_checkpoint(
    dir: &Path,
    expect_family: Option<Family>,
) -> Result<(ModelAssembly, RunHistory), TrainError> {
    if !dir.is_dir() {
        return Err(TrainError::io(
            dir,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "checkpoint directory not found",
            ),
        ));
    }
    let spec = checkpoint_spec(dir)?;
    if let Some(f) = expect_family {
        if f != spec.backbone.family {
            return Err(TrainError::Checkpoint(format!(
                "checkpoint {} holds a {} model, expected {f}",
                dir.display(),
                spec.backbone.family
            )));
        }
    }
    let mut tensors = tensorio::load_tensors(&dir.join(TENSORS_FILE))
        .map_err(|e| TrainError::Checkpoint(e.to_string()))?;
    // the plan fixes the order; names must all be present
    let skeleton = crate::backbones::build_plan(&spec)?;
    let mut take = |name: &str| {
        tensors.remove(name).ok_or_else(|| {
            TrainError::Checkpoint(format!(
                "{}: tensor `{name}` missing (record and archive disagree)",
                dir.display()
            ))
        })
    };
    let values = skeleton
        .params
        .iter()
        .map(|p| take(&p.name))
        .collect::<Result<Vec<_>, _>>()?;
    let buffers = skeleton
        .buffers
        .iter()
        .map(|b| take(&b.name))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(extra) = tensors.keys().next() {
        return Err(TrainError::Checkpoint(format!(
            "{}: unexpected tensor `{extra}` (record and archive disagree)",
            dir.display()
        )));
    }
    let model = ModelAssembly::with_state(&spec, values, buffers)?;
    let history = RunHistory::load(&dir.join(HISTORY_FILE))?;
    Ok((model, history))
}
