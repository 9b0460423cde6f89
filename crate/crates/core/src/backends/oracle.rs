use sha2::{Digest, Sha256};

use crate::imaging::ImageGray;
use crate::study::{OracleRecord, TubeType};

use super::stub::{in_stub_lung, in_stub_region, stub_lung_map};
use super::{Backend, BackendError, ModelId, StudyContext, Tensor};

pub const ORACLE_POSITIVE: f32 = 0.9;
pub const ORACLE_NEGATIVE: f32 = 0.1;

/// Label-driven test backend. Scalar models answer 0.9 for a positive oracle
/// label and 0.1 otherwise, optionally perturbed by a deterministic offset
/// uniform in `[-epsilon, epsilon]` keyed on `(study_id, model, seed)`.
/// Maps are noise-free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleBackend {
    pub epsilon: f64,
    pub seed: u64,
}

impl OracleBackend {
    pub fn new(epsilon: f64, seed: u64) -> Self {
        Self { epsilon, seed }
    }

    fn noise(&self, study_id: &str, channel: &str) -> f32 {
        if self.epsilon == 0.0 {
            return 0.0;
        }
        let mut hasher = Sha256::new();
        hasher.update(study_id.as_bytes());
        hasher.update([0u8]);
        hasher.update(channel.as_bytes());
        hasher.update([0u8]);
        hasher.update(self.seed.to_le_bytes());
        let digest = hasher.finalize();
        let mut word = [0u8; 8];
        word.copy_from_slice(&digest[..8]);
        let unit = (u64::from_le_bytes(word) >> 11) as f64 / (1u64 << 53) as f64;
        (self.epsilon * (2.0 * unit - 1.0)) as f32
    }

    fn score(&self, study_id: &str, channel: &str, positive: bool) -> f32 {
        let base = if positive { ORACLE_POSITIVE } else { ORACLE_NEGATIVE };
        (base + self.noise(study_id, channel)).clamp(0.0, 1.0)
    }
}

fn ptx_map(oracle: &OracleRecord, w: usize, h: usize) -> Vec<f32> {
    if !oracle.pneumothorax {
        return vec![0.0; w * h];
    }
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let hit = match oracle.location {
                Some(loc) => in_stub_region(loc, x, y, w, h),
                None => in_stub_lung(0, x, y, w, h) || in_stub_lung(1, x, y, w, h),
            };
            out.push(if hit { 1.0 } else { 0.0 });
        }
    }
    out
}

impl Backend for OracleBackend {
    fn infer(&self, ctx: &StudyContext<'_>, model: ModelId, img: &ImageGray) -> Result<Tensor, BackendError> {
        let oracle = ctx.oracle.ok_or_else(|| BackendError::MissingOracle(ctx.study_id.to_string()))?;
        let id = ctx.study_id;
        let (w, h) = (img.width(), img.height());
        Ok(match model {
            ModelId::View => Tensor::scalar(self.score(id, "view", oracle.view.is_frontal())),
            ModelId::PtxFull => Tensor::scalar(self.score(id, "ptx_full", oracle.pneumothorax)),
            ModelId::PtxPatch => Tensor::scalar(self.score(id, "ptx_patch", oracle.pneumothorax)),
            ModelId::Tube => {
                let pigtail = oracle.chest_tube && oracle.tube_type == Some(TubeType::Pigtail);
                let standard = oracle.chest_tube && !pigtail;
                Tensor {
                    shape: vec![2],
                    data: vec![self.score(id, "tube/standard", standard), self.score(id, "tube/pigtail", pigtail)],
                }
            }
            ModelId::LungSeg => Tensor { shape: vec![h, w], data: stub_lung_map(w, h) },
            ModelId::PtxSeg => Tensor { shape: vec![h, w], data: ptx_map(oracle, w, h) },
        })
    }
}
