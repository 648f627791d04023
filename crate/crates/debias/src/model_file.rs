//! Binary container for trained classifier models.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! [0..4)   magic  b"HSDB"
//! [4..8)   u32    format version (currently 1)
//! [8..16)  u64    header length in bytes
//! [16..16+len)    JSON header: { feature_config, train_config, trained_at }
//! [rest]          payload: dimension f64s for class-0 weights, dimension
//!                 f64s for class-1 weights, then the two biases
//! ```
//!
//! Writing the same model twice yields byte-identical files: the header is
//! serialized with a fixed field order and the payload is raw IEEE-754 bits.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use debias_core::classifier::{ClassifierModel, TrainConfig};
use debias_core::features::FeatureConfig;

pub const MAGIC: [u8; 4] = *b"HSDB";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {found:?} (expected {expected:?}); not a model file", expected = MAGIC)]
    BadMagic { found: [u8; 4] },
    #[error("unsupported model format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("corrupt model file: {0}")]
    CorruptPayload(String),
}

/// The JSON header; field order is fixed so serialization is deterministic.
#[derive(Debug, Serialize, Deserialize)]
struct Header {
    feature_config: FeatureConfig,
    train_config: TrainConfig,
    trained_at: u64,
}

/// Serializes a model into the container format.
pub fn encode_model(model: &ClassifierModel) -> Result<Vec<u8>, ModelFileError> {
    let header = Header {
        feature_config: model.feature_config.clone(),
        train_config: model.train_config.clone(),
        trained_at: model.trained_at,
    };
    let header_bytes = serde_json::to_vec(&header)
        .map_err(|e| ModelFileError::CorruptPayload(e.to_string()))?;

    let dimension = model.dimension();
    let mut out = Vec::with_capacity(16 + header_bytes.len() + (2 * dimension + 2) * 8);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for row in &model.weights {
        for &w in row {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    for &b in &model.bias {
        out.extend_from_slice(&b.to_le_bytes());
    }
    Ok(out)
}

/// Parses a model from container-format bytes, validating shape and
/// finiteness.
pub fn decode_model(bytes: &[u8]) -> Result<ClassifierModel, ModelFileError> {
    if bytes.len() < 16 {
        return Err(ModelFileError::CorruptPayload(format!(
            "file too short ({} bytes) to hold the fixed header",
            bytes.len()
        )));
    }
    let found: [u8; 4] = bytes[0..4].try_into().expect("slice of length 4");
    if found != MAGIC {
        return Err(ModelFileError::BadMagic { found });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("slice of length 4"));
    if version != FORMAT_VERSION {
        return Err(ModelFileError::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("slice of length 8"));
    let header_len = usize::try_from(header_len)
        .map_err(|_| ModelFileError::CorruptPayload("header length overflows usize".into()))?;
    let payload_start = 16usize
        .checked_add(header_len)
        .ok_or_else(|| ModelFileError::CorruptPayload("header length overflows usize".into()))?;
    if bytes.len() < payload_start {
        return Err(ModelFileError::CorruptPayload(format!(
            "declared header length {} exceeds file size {}",
            header_len,
            bytes.len()
        )));
    }
    let header: Header = serde_json::from_slice(&bytes[16..payload_start])
        .map_err(|e| ModelFileError::CorruptPayload(format!("invalid header JSON: {e}")))?;

    let dimension = header.feature_config.dimension;
    let expected_payload = (2 * dimension + 2) * 8;
    let payload = &bytes[payload_start..];
    if payload.len() != expected_payload {
        return Err(ModelFileError::CorruptPayload(format!(
            "payload holds {} bytes but dimension {} requires {}",
            payload.len(),
            dimension,
            expected_payload
        )));
    }

    let mut floats = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of length 8")));
    let mut row = |n: usize| -> Vec<f64> { floats.by_ref().take(n).collect() };
    let weights = [row(dimension), row(dimension)];
    let bias_vec = row(2);
    let bias = [bias_vec[0], bias_vec[1]];

    let model = ClassifierModel {
        feature_config: header.feature_config,
        weights,
        bias,
        trained_at: header.trained_at,
        train_config: header.train_config,
    };
    if !model.is_finite() {
        return Err(ModelFileError::CorruptPayload(
            "payload contains non-finite parameters".into(),
        ));
    }
    Ok(model)
}

/// Writes a model to disk in the container format.
pub fn save_model(path: &Path, model: &ClassifierModel) -> Result<(), ModelFileError> {
    fs::write(path, encode_model(model)?)?;
    Ok(())
}

/// Reads a model from disk, validating the container.
pub fn load_model(path: &Path) -> Result<ClassifierModel, ModelFileError> {
    decode_model(&fs::read(path)?)
}
