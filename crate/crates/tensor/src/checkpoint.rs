//! Single-file weight archives: a JSON header followed by named
//! little-endian f32 tensors (safetensors layout).

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use safetensors::tensor::{Dtype, SafeTensors, TensorView};

use crate::float::Float;
use crate::param::Module;
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
const META_KEY: &str = "hullscan";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("checkpoint architecture is `{found}`, expected `{expected}`")]
    Architecture { expected: String, found: String },
    #[error("unsupported checkpoint format version {0}")]
    Version(u32),
    #[error("checkpoint is missing tensor `{0}`")]
    Missing(String),
    #[error("tensor `{name}` has shape {found:?} in checkpoint, model expects {expected:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

impl From<safetensors::SafeTensorError> for CheckpointError {
    fn from(e: safetensors::SafeTensorError) -> Self {
        CheckpointError::Format(e.to_string())
    }
}

/// Parsed checkpoint header.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointHeader {
    pub architecture: String,
    pub format_version: u32,
    pub config: serde_json::Value,
    pub shapes: BTreeMap<String, Vec<usize>>,
}

pub fn encode<T: Float, M: Module<T>>(
    model: &M,
    architecture: &str,
    config: &serde_json::Value,
) -> Result<Vec<u8>, CheckpointError> {
    let mut blobs: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::new();
    model.visit(&mut |name, p| {
        let bytes: Vec<u8> = p
            .value()
            .data()
            .iter()
            .flat_map(|v| (v.as_f64() as f32).to_le_bytes())
            .collect();
        blobs.push((name.to_string(), p.shape().to_vec(), bytes));
    });
    let mut seen = std::collections::HashSet::new();
    for (name, _, _) in &blobs {
        if !seen.insert(name.as_str()) {
            return Err(CheckpointError::Format(format!(
                "duplicate tensor name `{name}`"
            )));
        }
    }
    let views = blobs
        .iter()
        .map(|(name, shape, bytes)| {
            TensorView::new(Dtype::F32, shape.clone(), bytes)
                .map(|v| (name.clone(), v))
                .map_err(CheckpointError::from)
        })
        .collect::<Result<Vec<_>, _>>()?;
    // A single metadata entry keeps the header byte-stable; HashMap order
    // is not.
    let header = serde_json::json!({
        "architecture": architecture,
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": config,
    });
    let meta = HashMap::from([(META_KEY.to_string(), header.to_string())]);
    Ok(safetensors::serialize(views, &Some(meta))?)
}

pub fn read_header(bytes: &[u8]) -> Result<CheckpointHeader, CheckpointError> {
    let (_, metadata) = SafeTensors::read_metadata(bytes)?;
    let meta = metadata
        .metadata()
        .clone()
        .ok_or_else(|| CheckpointError::Format("missing header metadata".into()))?;
    let raw = meta
        .get(META_KEY)
        .ok_or_else(|| CheckpointError::Format(format!("header lacks `{META_KEY}`")))?;
    let mut json: serde_json::Value = serde_json::from_str(raw)
        .map_err(|e| CheckpointError::Format(format!("bad header json: {e}")))?;
    let format_version = json["format_version"]
        .as_u64()
        .ok_or_else(|| CheckpointError::Format("bad format_version".into()))?
        as u32;
    let architecture = json["architecture"]
        .as_str()
        .ok_or_else(|| CheckpointError::Format("bad architecture".into()))?
        .to_string();
    let config = json["config"].take();
    let st = SafeTensors::deserialize(bytes)?;
    let shapes = st
        .tensors()
        .into_iter()
        .map(|(name, view)| (name, view.shape().to_vec()))
        .collect();
    Ok(CheckpointHeader {
        architecture,
        format_version,
        config,
        shapes,
    })
}

/// Loads tensors into `model` after checking architecture, version and every
/// parameter shape.
pub fn decode_into<T: Float, M: Module<T>>(
    bytes: &[u8],
    architecture: &str,
    model: &mut M,
) -> Result<CheckpointHeader, CheckpointError> {
    let header = read_header(bytes)?;
    if header.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(CheckpointError::Version(header.format_version));
    }
    if header.architecture != architecture {
        return Err(CheckpointError::Architecture {
            expected: architecture.to_string(),
            found: header.architecture,
        });
    }
    let st = SafeTensors::deserialize(bytes)?;
    let mut err = None;
    model.visit_mut(&mut |name, p| {
        if err.is_some() {
            return;
        }
        let view = match st.tensor(name) {
            Ok(v) => v,
            Err(_) => {
                err = Some(CheckpointError::Missing(name.to_string()));
                return;
            }
        };
        if view.shape() != p.shape() {
            err = Some(CheckpointError::Shape {
                name: name.to_string(),
                expected: p.shape().to_vec(),
                found: view.shape().to_vec(),
            });
            return;
        }
        if view.dtype() != Dtype::F32 {
            err = Some(CheckpointError::Format(format!(
                "tensor `{name}` is not f32"
            )));
            return;
        }
        let data: Vec<T> = view
            .data()
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        p.set(Tensor::from_vec(view.shape(), data));
    });
    match err {
        Some(e) => Err(e),
        None => Ok(header),
    }
}

pub fn save<T: Float, M: Module<T>>(
    path: &Path,
    model: &M,
    architecture: &str,
    config: &serde_json::Value,
) -> Result<(), CheckpointError> {
    std::fs::write(path, encode(model, architecture, config)?)?;
    Ok(())
}

pub fn load<T: Float, M: Module<T>>(
    path: &Path,
    architecture: &str,
    model: &mut M,
) -> Result<CheckpointHeader, CheckpointError> {
    decode_into(&std::fs::read(path)?, architecture, model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Linear;
    use rand::SeedableRng;

    #[test]
    fn roundtrip_preserves_f32_bits() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let a = Linear::<f32>::new(5, 3, &mut rng);
        let cfg = serde_json::json!({"in": 5, "out": 3});
        let bytes = encode(&a, "linear-test", &cfg).unwrap();
        let mut b = Linear::<f32>::new(5, 3, &mut rng);
        let header = decode_into(&bytes, "linear-test", &mut b).unwrap();
        assert_eq!(header.config, cfg);
        assert_eq!(header.shapes["weight"], vec![3, 5]);
        assert_eq!(a.weight.value(), b.weight.value());
        assert_eq!(a.bias.value(), b.bias.value());
        assert_eq!(bytes, encode(&b, "linear-test", &cfg).unwrap());
    }

    #[test]
    fn rejects_wrong_architecture_and_shape() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let a = Linear::<f32>::new(5, 3, &mut rng);
        let bytes = encode(&a, "x", &serde_json::Value::Null).unwrap();
        let mut b = Linear::<f32>::new(5, 3, &mut rng);
        assert!(matches!(
            decode_into(&bytes, "y", &mut b),
            Err(CheckpointError::Architecture { .. })
        ));
        let mut c = Linear::<f32>::new(4, 3, &mut rng);
        assert!(matches!(
            decode_into(&bytes, "x", &mut c),
            Err(CheckpointError::Shape { .. })
        ));
    }
}
