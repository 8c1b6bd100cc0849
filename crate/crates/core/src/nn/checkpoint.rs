//! Binary model checkpoints.
//!
//! Layout: 16-byte magic, version byte, `u32` length + JSON network
//! description, `u64` parameter count, then the parameters as little-endian
//! `f32`.

use std::fs;
use std::path::Path;

use super::{Network, NetworkSpec, NnError};
use crate::container::{ContainerError, Cursor};

pub const MODEL_MAGIC: &[u8; 16] = b"\x89C2GMODEL\r\n\x1a\n\0\0\0";
const VERSION: u8 = 1;

/// A network description with its trained parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: NetworkSpec,
    pub params: Vec<f32>,
}

impl Model {
    /// Checks the parameter count against the architecture.
    pub fn new(spec: NetworkSpec, params: Vec<f32>) -> Result<Self, NnError> {
        let expected = spec.total_params()?;
        if params.len() != expected {
            return Err(NnError::ShapeMismatch {
                what: "parameters",
                expected,
                found: params.len(),
            });
        }
        Ok(Self { spec, params })
    }

    pub fn network(&self) -> Result<Network, NnError> {
        Network::new(self.spec.clone())
    }
}

fn truncated(e: ContainerError) -> NnError {
    match e {
        ContainerError::TruncatedFile { needed, found } => NnError::TruncatedFile { needed, found },
        other => NnError::Corrupt(other.to_string()),
    }
}

pub fn encode_model(model: &Model) -> Vec<u8> {
    let json = serde_json::to_vec(&model.spec).expect("network spec serializes");
    let mut out = Vec::with_capacity(16 + 1 + 4 + json.len() + 8 + 4 * model.params.len());
    out.extend_from_slice(MODEL_MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(model.params.len() as u64).to_le_bytes());
    for v in &model.params {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<Model, NnError> {
    let mut c = Cursor::new(bytes);
    let magic = c.slice(16).map_err(|_| NnError::BadMagic)?;
    if magic != MODEL_MAGIC {
        return Err(NnError::BadMagic);
    }
    let version = c.u8().map_err(truncated)?;
    if version != VERSION {
        return Err(NnError::UnsupportedVersion(version));
    }
    let len = c.u32().map_err(truncated)? as usize;
    let json = c.slice(len).map_err(truncated)?;
    let spec: NetworkSpec = serde_json::from_slice(json)
        .map_err(|e| NnError::Corrupt(format!("network description: {e}")))?;
    let count = u64::from_le_bytes(c.take::<8>().map_err(truncated)?) as usize;
    let expected = spec.total_params()?;
    if count != expected {
        return Err(NnError::Corrupt(format!(
            "{count} parameters stored, architecture has {expected}"
        )));
    }
    let blob = c.slice(count.saturating_mul(4)).map_err(truncated)?;
    if c.remaining() != 0 {
        return Err(NnError::Corrupt(format!(
            "{} trailing bytes",
            c.remaining()
        )));
    }
    let params = blob
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok(Model { spec, params })
}

pub fn write_model(model: &Model, path: &Path) -> Result<(), NnError> {
    fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<Model, NnError> {
    decode_model(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_deeplnino, Shape};

    fn model() -> Model {
        let spec = build_deeplnino(Shape::new(89, 89, 2), 2).unwrap();
        let net = Network::new(spec.clone()).unwrap();
        Model::new(spec, net.init_params(1)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let back = decode_model(&encode_model(&m)).unwrap();
        assert_eq!(back.spec, m.spec);
        assert!(back
            .params
            .iter()
            .zip(&m.params)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn detects_damage() {
        let bytes = encode_model(&model());
        let mut bad = bytes.clone();
        bad[3] ^= 1;
        assert!(matches!(decode_model(&bad), Err(NnError::BadMagic)));
        let mut bad = bytes.clone();
        bad[16] = 9;
        assert!(matches!(
            decode_model(&bad),
            Err(NnError::UnsupportedVersion(9))
        ));
        assert!(matches!(
            decode_model(&bytes[..bytes.len() - 3]),
            Err(NnError::TruncatedFile { .. })
        ));
        let mut long = bytes;
        long.push(0);
        assert!(matches!(decode_model(&long), Err(NnError::Corrupt(_))));
    }

    #[test]
    fn parameter_count_checked() {
        let m = model();
        assert!(Model::new(m.spec.clone(), vec![0.0; 3]).is_err());
    }
}
