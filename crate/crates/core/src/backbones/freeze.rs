use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::nn::{Plan, Section};

/// Which backbone parameters stay trainable. Head parameters are always trainable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "FreezeRecord", try_from = "FreezeRecord")]
pub enum FreezePolicy {
    FullFinetune,
    /// The last `n` conv/dense units of the backbone, with their norms.
    LastNLayers(usize),
    /// The final stage of the family's stage table.
    LastStageOnly,
}

#[derive(Serialize, Deserialize)]
struct FreezeRecord {
    mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
}

impl From<FreezePolicy> for FreezeRecord {
    fn from(p: FreezePolicy) -> Self {
        let (mode, n) = match p {
            FreezePolicy::FullFinetune => ("full_finetune", None),
            FreezePolicy::LastNLayers(n) => ("last_n_layers", Some(n)),
            FreezePolicy::LastStageOnly => ("last_stage_only", None),
        };
        Self {
            mode: mode.into(),
            n,
        }
    }
}

impl TryFrom<FreezeRecord> for FreezePolicy {
    type Error = ModelError;

    fn try_from(r: FreezeRecord) -> Result<Self, Self::Error> {
        FreezePolicy::from_parts(&r.mode, r.n)
    }
}

impl FreezePolicy {
    /// Builds a policy from a mode name and the optional layer count.
    pub fn from_parts(mode: &str, n: Option<usize>) -> Result<Self, ModelError> {
        match mode {
            "full_finetune" => Ok(Self::FullFinetune),
            "last_stage_only" => Ok(Self::LastStageOnly),
            "last_n_layers" => match n {
                Some(n) if n >= 1 => Ok(Self::LastNLayers(n)),
                Some(_) => Err(ModelError::Freeze("last_n_layers needs n >= 1".into())),
                None => Err(ModelError::Freeze(
                    "last_n_layers needs a layer count".into(),
                )),
            },
            other => Err(ModelError::Freeze(format!(
                "unknown mode `{other}` (expected full_finetune, last_n_layers or last_stage_only)"
            ))),
        }
    }

    pub fn mode(&self) -> &'static str {
        match self {
            Self::FullFinetune => "full_finetune",
            Self::LastNLayers(_) => "last_n_layers",
            Self::LastStageOnly => "last_stage_only",
        }
    }
}

impl fmt::Display for FreezePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::LastNLayers(n) => write!(f, "last_n_layers:{n}"),
            other => f.write_str(other.mode()),
        }
    }
}

/// Accepts `full_finetune`, `last_stage_only` and `last_n_layers:<n>`.
impl FromStr for FreezePolicy {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some((mode, n)) => {
                let n = n
                    .trim()
                    .parse()
                    .map_err(|_| ModelError::Freeze(format!("bad layer count in `{s}`")))?;
                Self::from_parts(mode.trim(), Some(n))
            }
            None => Self::from_parts(s.trim(), None),
        }
    }
}

/// Per-parameter trainable flags for `plan` under `policy`.
pub fn apply_freeze(plan: &Plan, policy: FreezePolicy) -> Result<Vec<bool>, ModelError> {
    let units = plan.unit_count(Section::Backbone);
    let last_stage = plan.stage_count(Section::Backbone).saturating_sub(1);
    if let FreezePolicy::LastNLayers(n) = policy {
        if n == 0 || n > units {
            return Err(ModelError::Freeze(format!(
                "last_n_layers n = {n} outside 1..={units} (backbone layer count)"
            )));
        }
    }
    Ok(plan
        .params
        .iter()
        .map(|p| {
            let layer = &plan.layers[p.layer];
            layer.section == Section::Head
                || match policy {
                    FreezePolicy::FullFinetune => true,
                    FreezePolicy::LastNLayers(n) => layer.unit >= units - n,
                    FreezePolicy::LastStageOnly => layer.stage == last_stage,
                }
        })
        .collect())
}
