//! Model file: "BFELMODL", u32 version, u64 parameter count, then the f64
//! values, all little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{ModelSpec, ParameterVector};

pub const MODEL_MAGIC: &[u8; 8] = b"BFELMODL";
pub const MODEL_VERSION: u32 = 1;

pub fn encode_model(params: &ParameterVector) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 8 * params.len());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in params.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes parameters for `spec`; the stored count must match its layout.
pub fn decode_model(bytes: &[u8], spec: &ModelSpec) -> Result<ParameterVector> {
    let truncated = |detail: String| Error::Truncated {
        what: "model file".into(),
        detail,
    };
    if bytes.len() < 20 {
        return Err(truncated(format!("{} byte header", bytes.len())));
    }
    if &bytes[..8] != MODEL_MAGIC {
        return Err(Error::Malformed(
            "model file does not start with BFELMODL".into(),
        ));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != MODEL_VERSION {
        return Err(Error::Malformed(format!(
            "unsupported model file version {version}"
        )));
    }
    let count = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let layout = spec.layout();
    if count != layout.len() as u64 {
        return Err(Error::LayoutMismatch(format!(
            "model file holds {count} parameters, spec needs {}",
            layout.len()
        )));
    }
    let body = &bytes[20..];
    if body.len() != layout.len() * 8 {
        return Err(truncated(format!(
            "expected {} value bytes, found {}",
            layout.len() * 8,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    ParameterVector::new(layout, values)
}

pub fn write_model(path: impl AsRef<Path>, params: &ParameterVector) -> Result<()> {
    Ok(std::fs::write(path, encode_model(params))?)
}

pub fn read_model(path: impl AsRef<Path>, spec: &ModelSpec) -> Result<ParameterVector> {
    decode_model(&std::fs::read(path)?, spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let spec = ModelSpec::mlp(vec![3], vec![4], 2).unwrap();
        let p = spec.init_params(3);
        let bytes = encode_model(&p);
        assert_eq!(bytes.len(), 20 + 8 * spec.param_count());
        assert_eq!(&bytes[..8], b"BFELMODL");
        assert_eq!(decode_model(&bytes, &spec).unwrap(), p);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let spec = ModelSpec::mlp(vec![3], vec![4], 2).unwrap();
        let bytes = encode_model(&spec.init_params(0));
        assert!(decode_model(&bytes[..bytes.len() - 1], &spec).is_err());
        assert!(decode_model(&bytes[..10], &spec).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_model(&bad, &spec).is_err());
        let other = ModelSpec::mlp(vec![3], vec![5], 2).unwrap();
        assert!(matches!(
            decode_model(&bytes, &other),
            Err(Error::LayoutMismatch(_))
        ));
    }
}
