//! JSON bodies for `POST /v1/infer`.
//!
//! Tensors travel as little-endian IEEE-754 binary32 values, base64 encoded
//! with the standard alphabet and padding (`"encoding": "f32le-b64"`).

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ModelId;

pub const ENCODING: &str = "f32le-b64";

#[derive(Debug, Error, PartialEq)]
pub enum WireError {
    #[error("unsupported encoding '{0}'")]
    UnsupportedEncoding(String),
    #[error("invalid base64: {0}")]
    Base64(String),
    #[error("payload of {0} bytes is not a whole number of f32 values")]
    Misaligned(usize),
    #[error("shape {shape:?} implies {expected} values, payload has {actual}")]
    ShapeMismatch { shape: Vec<usize>, expected: usize, actual: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceRequest {
    pub model: ModelId,
    pub shape: Vec<usize>,
    pub encoding: String,
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResponse {
    pub shape: Vec<usize>,
    pub encoding: String,
    pub data: String,
}

pub fn encode_f32(values: &[f32]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    STANDARD.encode(bytes)
}

pub fn decode_f32(data: &str) -> Result<Vec<f32>, WireError> {
    let bytes = STANDARD.decode(data).map_err(|e| WireError::Base64(e.to_string()))?;
    if bytes.len() % 4 != 0 {
        return Err(WireError::Misaligned(bytes.len()));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn decode_shaped(encoding: &str, shape: &[usize], data: &str) -> Result<Vec<f32>, WireError> {
    if encoding != ENCODING {
        return Err(WireError::UnsupportedEncoding(encoding.to_string()));
    }
    let values = decode_f32(data)?;
    let expected: usize = shape.iter().product();
    if values.len() != expected {
        return Err(WireError::ShapeMismatch { shape: shape.to_vec(), expected, actual: values.len() });
    }
    Ok(values)
}

impl InferenceRequest {
    pub fn new(model: ModelId, width: usize, height: usize, pixels: &[f32]) -> Self {
        Self { model, shape: vec![height, width], encoding: ENCODING.into(), data: encode_f32(pixels) }
    }

    pub fn decode(&self) -> Result<Vec<f32>, WireError> {
        decode_shaped(&self.encoding, &self.shape, &self.data)
    }
}

impl InferenceResponse {
    pub fn new(shape: Vec<usize>, values: &[f32]) -> Self {
        Self { shape, encoding: ENCODING.into(), data: encode_f32(values) }
    }

    pub fn decode(&self) -> Result<Vec<f32>, WireError> {
        decode_shaped(&self.encoding, &self.shape, &self.data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_encoding() {
        // 1.0f32 = 0x3f800000 -> LE bytes 00 00 80 3f
        assert_eq!(encode_f32(&[1.0]), "AACAPw==");
        assert_eq!(decode_f32("AACAPw==").unwrap(), vec![1.0]);
    }

    #[test]
    fn decode_errors() {
        assert!(matches!(decode_f32("not base64!"), Err(WireError::Base64(_))));
        assert_eq!(decode_f32("AAA="), Err(WireError::Misaligned(2)));
        let r = InferenceResponse { shape: vec![3], encoding: ENCODING.into(), data: encode_f32(&[0.5]) };
        assert!(matches!(r.decode(), Err(WireError::ShapeMismatch { expected: 3, actual: 1, .. })));
        let r = InferenceResponse { shape: vec![1], encoding: "f16".into(), data: String::new() };
        assert!(matches!(r.decode(), Err(WireError::UnsupportedEncoding(_))));
    }

    #[test]
    fn request_json_layout() {
        let req = InferenceRequest::new(ModelId::PtxSeg, 2, 1, &[0.0, 1.0]);
        let v: serde_json::Value = serde_json::to_value(&req).unwrap();
        assert_eq!(v["model"], "ptx_seg");
        assert_eq!(v["shape"], serde_json::json!([1, 2]));
        assert_eq!(v["encoding"], "f32le-b64");
        assert_eq!(req.decode().unwrap(), vec![0.0, 1.0]);
    }

    proptest! {
        #[test]
        fn payload_round_trip_is_byte_exact(raw in proptest::collection::vec(any::<[u8; 4]>(), 0..64)) {
            let bytes: Vec<u8> = raw.concat();
            let text = STANDARD.encode(&bytes);
            let decoded = decode_f32(&text).unwrap();
            prop_assert_eq!(encode_f32(&decoded), text);
        }
    }
}
