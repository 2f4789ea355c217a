//! Named-tensor archives in the safetensors format.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;

#[derive(Debug, thiserror::Error)]
pub enum TensorIoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: corrupted tensor archive ({reason})")]
    Corrupt { path: String, reason: String },
}

/// Writes `tensors` as little-endian f64 entries.
pub fn save_tensors(path: &Path, tensors: &[(String, &ArrayD<f64>)]) -> Result<(), TensorIoError> {
    let bytes: Vec<(String, Vec<u8>, Vec<usize>)> = tensors
        .iter()
        .map(|(name, t)| {
            let data = t.iter().flat_map(|v| v.to_le_bytes()).collect();
            (name.clone(), data, t.shape().to_vec())
        })
        .collect();
    let views: Vec<(String, TensorView<'_>)> = bytes
        .iter()
        .map(|(name, data, shape)| {
            let view =
                TensorView::new(Dtype::F64, shape.clone(), data).expect("buffer sized from shape");
            (name.clone(), view)
        })
        .collect();
    let out = safetensors::serialize(views, None).map_err(|e| TensorIoError::Corrupt {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    std::fs::write(path, out).map_err(|source| TensorIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads every tensor of an archive as f64 (f32 entries are widened).
pub fn load_tensors(path: &Path) -> Result<BTreeMap<String, ArrayD<f64>>, TensorIoError> {
    let bytes = std::fs::read(path).map_err(|source| TensorIoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_tensors(&bytes).map_err(|reason| TensorIoError::Corrupt {
        path: path.display().to_string(),
        reason,
    })
}

pub fn parse_tensors(bytes: &[u8]) -> Result<BTreeMap<String, ArrayD<f64>>, String> {
    let st = SafeTensors::deserialize(bytes).map_err(|e| e.to_string())?;
    let mut out = BTreeMap::new();
    for (name, view) in st.tensors() {
        let data = view.data();
        let values: Vec<f64> = match view.dtype() {
            Dtype::F64 => data
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect(),
            Dtype::F32 => data
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
                .collect(),
            other => return Err(format!("tensor `{name}` has unsupported dtype {other:?}")),
        };
        let arr = ArrayD::from_shape_vec(IxDyn(view.shape()), values)
            .map_err(|e| format!("tensor `{name}`: {e}"))?;
        out.insert(name, arr);
    }
    Ok(out)
}
