use std::path::{Path, PathBuf};

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{build_backbone, Backbone, BackboneSpec, Family, ModelError};
use crate::nn::{ParamStore, Plan, Section};
use crate::tensorio;

/// Manifest describing a published parameter set converted to a tensor archive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightManifest {
    pub family: Family,
    pub identifier: String,
    /// Archive path, relative to the manifest file.
    pub archive: String,
    pub sha256: String,
    /// Learnable plus running-statistics scalars.
    pub parameter_count: usize,
    /// `oihw` (native) or `hwio` (Keras) convolution kernels.
    #[serde(default = "default_layout")]
    pub kernel_layout: String,
}

fn default_layout() -> String {
    "oihw".into()
}

impl WeightManifest {
    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            context: format!("reading weight manifest {}", path.display()),
            source,
        })?;
        toml::from_str(&text)
            .map_err(|e| ModelError::Weights(format!("manifest {}: {e}", path.display())))
    }
}

/// Where backbone parameters come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WeightSource {
    /// Deterministic initialization from a seed.
    Seeded(u64),
    /// Manifest-verified tensor archive.
    Manifest(PathBuf),
}

impl WeightSource {
    /// `seeded:<n>` or a manifest path.
    pub fn parse(s: &str) -> Result<Self, ModelError> {
        match s.strip_prefix("seeded:") {
            Some(n) => n
                .trim()
                .parse()
                .map(WeightSource::Seeded)
                .map_err(|_| ModelError::Weights(format!("bad seed in weight source `{s}`"))),
            None if s.trim().is_empty() => Err(ModelError::Weights("empty weight source".into())),
            None => Ok(WeightSource::Manifest(PathBuf::from(s))),
        }
    }

    /// Overwrites every backbone parameter and buffer of `store`.
    pub fn apply(
        &self,
        family: Family,
        plan: &Plan,
        store: &mut ParamStore,
    ) -> Result<(), ModelError> {
        match self {
            WeightSource::Seeded(seed) => {
                let fresh = ParamStore::init(plan, *seed);
                for (i, p) in plan.params.iter().enumerate() {
                    if plan.layers[p.layer].section == Section::Backbone {
                        store
                            .value_mut(crate::nn::ParamId(i))
                            .assign(fresh.value(crate::nn::ParamId(i)));
                    }
                }
                Ok(())
            }
            WeightSource::Manifest(path) => apply_archive(path, family, plan, store),
        }
    }
}

pub fn file_sha256(path: &Path) -> Result<String, ModelError> {
    let bytes = std::fs::read(path).map_err(|source| ModelError::Io {
        context: format!("reading {}", path.display()),
        source,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn apply_archive(
    manifest_path: &Path,
    family: Family,
    plan: &Plan,
    store: &mut ParamStore,
) -> Result<(), ModelError> {
    let manifest = WeightManifest::load(manifest_path)?;
    if manifest.family != family {
        return Err(ModelError::Weights(format!(
            "manifest {} is for {}, not {family}",
            manifest_path.display(),
            manifest.family
        )));
    }
    let hwio = match manifest.kernel_layout.as_str() {
        "oihw" => false,
        "hwio" => true,
        other => {
            return Err(ModelError::Weights(format!(
                "unknown kernel layout `{other}`"
            )))
        }
    };
    let archive = manifest_path
        .parent()
        .unwrap_or(Path::new("."))
        .join(&manifest.archive);
    let found = file_sha256(&archive)?;
    if !found.eq_ignore_ascii_case(&manifest.sha256) {
        return Err(ModelError::Checksum {
            path: archive.display().to_string(),
            expected: manifest.sha256,
            found,
        });
    }
    let expected = plan.section_total_count(Section::Backbone);
    if manifest.parameter_count != expected {
        return Err(ModelError::CountMismatch {
            family: family.to_string(),
            expected,
            found: manifest.parameter_count,
        });
    }
    let tensors =
        tensorio::load_tensors(&archive).map_err(|e| ModelError::Weights(e.to_string()))?;
    let mut loaded = 0;
    let fetch = |name: &str, shape: &[usize]| -> Result<ArrayD<f64>, ModelError> {
        let t = tensors
            .get(name)
            .ok_or_else(|| ModelError::Weights(format!("archive lacks tensor `{name}`")))?;
        if t.shape() == shape {
            return Ok(t.clone());
        }
        if hwio && shape.len() == 4 && t.shape() == [shape[2], shape[3], shape[1], shape[0]] {
            return Ok(t
                .view()
                .permuted_axes(ndarray::IxDyn(&[3, 2, 0, 1]))
                .as_standard_layout()
                .into_owned());
        }
        Err(ModelError::Weights(format!(
            "tensor `{name}` has shape {:?}, expected {shape:?}",
            t.shape()
        )))
    };
    for (i, p) in plan.params.iter().enumerate() {
        if plan.layers[p.layer].section == Section::Backbone {
            let t = fetch(&p.name, &p.shape)?;
            loaded += t.len();
            store.value_mut(crate::nn::ParamId(i)).assign(&t);
        }
    }
    for (i, b) in plan.buffers.iter().enumerate() {
        if plan.layers[b.layer].section == Section::Backbone {
            let t = fetch(&b.name, &b.shape)?;
            loaded += t.len();
            store.buffer_mut(crate::nn::BufferId(i)).assign(&t);
        }
    }
    if loaded != manifest.parameter_count {
        return Err(ModelError::CountMismatch {
            family: family.to_string(),
            expected: manifest.parameter_count,
            found: loaded,
        });
    }
    Ok(())
}

/// Backbone graph, its plan and its parameters. For the full architectures the
/// census is checked against the family's recorded counts first.
pub fn load_backbone(spec: &BackboneSpec) -> Result<(Backbone, Plan, ParamStore), ModelError> {
    let source = WeightSource::parse(&spec.weights)?;
    let mut plan = Plan::default();
    let backbone = build_backbone(spec.family, spec.variant, &mut plan);
    if spec.variant.is_full() {
        let (learnable, stats) = spec.family.manifest_counts();
        let found = plan.total_count();
        if found != learnable + stats {
            return Err(ModelError::CountMismatch {
                family: spec.family.to_string(),
                expected: learnable + stats,
                found,
            });
        }
    }
    let store = match source {
        WeightSource::Seeded(seed) => ParamStore::init(&plan, seed),
        WeightSource::Manifest(_) => {
            let mut store = ParamStore::init(&plan, 0);
            source.apply(spec.family, &plan, &mut store)?;
            store
        }
    };
    Ok((backbone, plan, store))
}
