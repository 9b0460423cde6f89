//! Model-inference boundary.
//!
//! Every model is reached through [`Backend::infer`], which returns a raw
//! [`Tensor`]. The free functions [`infer_scalar`], [`infer_probability`],
//! [`infer_tube`] and [`infer_map`] enforce the per-model shape contract,
//! reject non-finite values and clamp everything else into `[0, 1]` before it
//! reaches the pipeline.

mod oracle;
mod recording;
mod remote;
mod stub;
pub mod wire;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::ImageGray;
use crate::segpost::ProbMap;
use crate::study::OracleRecord;

pub use oracle::OracleBackend;
pub use recording::{RecordedCall, RecordingBackend};
pub use remote::{RemoteBackend, RemoteConfig};
pub use stub::{stub_lung_map, stub_lung_rect, StubBackend};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("protocol error: {0}")]
    ProtocolError(String),
    #[error("unknown model: {0}")]
    ModelUnknown(String),
    #[error("study {0} has no oracle record")]
    MissingOracle(String),
    #[error("model {model} does not produce {expected} output")]
    WrongModelKind { model: ModelId, expected: &'static str },
}

/// The closed set of models the pipeline talks to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    View,
    LungSeg,
    PtxFull,
    PtxPatch,
    PtxSeg,
    Tube,
}

impl ModelId {
    pub const ALL: [ModelId; 6] = [
        ModelId::View,
        ModelId::LungSeg,
        ModelId::PtxFull,
        ModelId::PtxPatch,
        ModelId::PtxSeg,
        ModelId::Tube,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelId::View => "view",
            ModelId::LungSeg => "lung_seg",
            ModelId::PtxFull => "ptx_full",
            ModelId::PtxPatch => "ptx_patch",
            ModelId::PtxSeg => "ptx_seg",
            ModelId::Tube => "tube",
        }
    }

    pub fn is_map(&self) -> bool {
        matches!(self, ModelId::LungSeg | ModelId::PtxSeg)
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = BackendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| BackendError::ModelUnknown(s.to_string()))
    }
}

/// Per-study information available to a backend. Real models only see the
/// pixels; the oracle backend also reads the study's oracle record.
#[derive(Debug, Clone, Copy)]
pub struct StudyContext<'a> {
    pub study_id: &'a str,
    pub oracle: Option<&'a OracleRecord>,
}

impl<'a> StudyContext<'a> {
    pub fn new(study_id: &'a str) -> Self {
        Self { study_id, oracle: None }
    }

    pub fn with_oracle(study_id: &'a str, oracle: Option<&'a OracleRecord>) -> Self {
        Self { study_id, oracle }
    }
}

/// Raw model output.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn scalar(v: f32) -> Self {
        Self { shape: vec![1], data: vec![v] }
    }
}

pub trait Backend: Send + Sync {
    fn infer(
        &self,
        ctx: &StudyContext<'_>,
        model: ModelId,
        img: &ImageGray,
    ) -> Result<Tensor, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn infer(&self, ctx: &StudyContext<'_>, model: ModelId, img: &ImageGray) -> Result<Tensor, BackendError> {
        (**self).infer(ctx, model, img)
    }
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn infer(&self, ctx: &StudyContext<'_>, model: ModelId, img: &ImageGray) -> Result<Tensor, BackendError> {
        (**self).infer(ctx, model, img)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeProbs {
    pub standard: f64,
    pub pigtail: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarOutput {
    Probability(f64),
    Tube(TubeProbs),
}

fn sanitize(model: ModelId, data: &[f32]) -> Result<Vec<f32>, BackendError> {
    if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
        return Err(BackendError::ProtocolError(format!("{model} returned non-finite value {bad}")));
    }
    let out_of_range = data.iter().filter(|v| !(0.0..=1.0).contains(*v)).count();
    if out_of_range > 0 {
        log::warn!("{model} returned {out_of_range} value(s) outside [0, 1]; clamping");
    }
    Ok(data.iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

fn check_shape(model: ModelId, t: &Tensor, expected: &[usize]) -> Result<(), BackendError> {
    if t.shape != expected {
        return Err(BackendError::ProtocolError(format!(
            "{model} returned shape {:?}, expected {:?}",
            t.shape, expected
        )));
    }
    if t.data.len() != expected.iter().product::<usize>() {
        return Err(BackendError::ProtocolError(format!(
            "{model} returned {} values for shape {:?}",
            t.data.len(),
            t.shape
        )));
    }
    Ok(())
}

/// Scalar-output models: `view`, `ptx_full`, `ptx_patch` (one probability)
/// and `tube` (standard, pigtail).
pub fn infer_scalar(
    backend: &dyn Backend,
    ctx: &StudyContext<'_>,
    model: ModelId,
    img: &ImageGray,
) -> Result<ScalarOutput, BackendError> {
    if model.is_map() {
        return Err(BackendError::WrongModelKind { model, expected: "scalar" });
    }
    let t = backend.infer(ctx, model, img)?;
    if model == ModelId::Tube {
        check_shape(model, &t, &[2])?;
        let v = sanitize(model, &t.data)?;
        Ok(ScalarOutput::Tube(TubeProbs { standard: v[0] as f64, pigtail: v[1] as f64 }))
    } else {
        check_shape(model, &t, &[1])?;
        let v = sanitize(model, &t.data)?;
        Ok(ScalarOutput::Probability(v[0] as f64))
    }
}

pub fn infer_probability(
    backend: &dyn Backend,
    ctx: &StudyContext<'_>,
    model: ModelId,
    img: &ImageGray,
) -> Result<f64, BackendError> {
    match infer_scalar(backend, ctx, model, img)? {
        ScalarOutput::Probability(p) => Ok(p),
        ScalarOutput::Tube(_) => Err(BackendError::WrongModelKind { model, expected: "single-probability" }),
    }
}

pub fn infer_tube(
    backend: &dyn Backend,
    ctx: &StudyContext<'_>,
    img: &ImageGray,
) -> Result<TubeProbs, BackendError> {
    match infer_scalar(backend, ctx, ModelId::Tube, img)? {
        ScalarOutput::Tube(t) => Ok(t),
        ScalarOutput::Probability(_) => unreachable!("tube always yields a pair"),
    }
}

/// Map-output models: `lung_seg`, `ptx_seg`. The map must match the input size.
pub fn infer_map(
    backend: &dyn Backend,
    ctx: &StudyContext<'_>,
    model: ModelId,
    img: &ImageGray,
) -> Result<ProbMap, BackendError> {
    if !model.is_map() {
        return Err(BackendError::WrongModelKind { model, expected: "map" });
    }
    let t = backend.infer(ctx, model, img)?;
    check_shape(model, &t, &[img.height(), img.width()])?;
    let v = sanitize(model, &t.data)?;
    ProbMap::new(img.width(), img.height(), v).map_err(|e| BackendError::ProtocolError(e.to_string()))
}

/// Backend selector as written on the command line or in a batch request:
/// `oracle`, `stub`, or an `http://` base URL.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendSpec {
    Oracle { epsilon: f64, seed: u64 },
    Stub,
    Remote(String),
}

impl BackendSpec {
    pub fn parse(s: &str, epsilon: f64, seed: u64) -> Result<Self, BackendError> {
        match s {
            "oracle" => Ok(BackendSpec::Oracle { epsilon, seed }),
            "stub" => Ok(BackendSpec::Stub),
            url if url.starts_with("http://") || url.starts_with("https://") => {
                Ok(BackendSpec::Remote(url.to_string()))
            }
            other => Err(BackendError::ModelUnknown(format!("unknown backend '{other}'"))),
        }
    }

    pub fn build(&self) -> Box<dyn Backend> {
        match self {
            BackendSpec::Oracle { epsilon, seed } => Box::new(OracleBackend::new(*epsilon, *seed)),
            BackendSpec::Stub => Box::new(StubBackend),
            BackendSpec::Remote(url) => Box::new(RemoteBackend::new(url, RemoteConfig::default())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Returns a canned tensor for every call.
    struct Canned(Tensor);

    impl Backend for Canned {
        fn infer(&self, _: &StudyContext<'_>, _: ModelId, _: &ImageGray) -> Result<Tensor, BackendError> {
            Ok(self.0.clone())
        }
    }

    fn img() -> ImageGray {
        ImageGray::filled(4, 3, 0.5).unwrap()
    }

    #[test]
    fn model_ids_round_trip_strings() {
        for m in ModelId::ALL {
            assert_eq!(m.as_str().parse::<ModelId>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.as_str()));
        }
        assert!(matches!("densenet".parse::<ModelId>(), Err(BackendError::ModelUnknown(_))));
    }

    #[test]
    fn shape_contract_enforced() {
        let ctx = StudyContext::new("s");
        let b = Canned(Tensor { shape: vec![3], data: vec![0.1, 0.2, 0.3] });
        assert!(matches!(
            infer_scalar(&b, &ctx, ModelId::PtxFull, &img()),
            Err(BackendError::ProtocolError(_))
        ));
        let b = Canned(Tensor { shape: vec![1], data: vec![0.1, 0.2] });
        assert!(matches!(
            infer_scalar(&b, &ctx, ModelId::View, &img()),
            Err(BackendError::ProtocolError(_))
        ));
        let b = Canned(Tensor { shape: vec![4, 3], data: vec![0.0; 12] });
        assert!(matches!(
            infer_map(&b, &ctx, ModelId::LungSeg, &img()),
            Err(BackendError::ProtocolError(_))
        ));
        let b = Canned(Tensor { shape: vec![3, 4], data: vec![0.25; 12] });
        assert_eq!(infer_map(&b, &ctx, ModelId::PtxSeg, &img()).unwrap().values()[0], 0.25);
        assert!(matches!(
            infer_map(&b, &ctx, ModelId::PtxFull, &img()),
            Err(BackendError::WrongModelKind { .. })
        ));
    }

    #[test]
    fn adversarial_values() {
        let ctx = StudyContext::new("s");
        let nan = Canned(Tensor::scalar(f32::NAN));
        assert!(matches!(
            infer_probability(&nan, &ctx, ModelId::PtxFull, &img()),
            Err(BackendError::ProtocolError(_))
        ));
        let inf = Canned(Tensor { shape: vec![2], data: vec![0.5, f32::INFINITY] });
        assert!(infer_tube(&inf, &ctx, &img()).is_err());
        let hi = Canned(Tensor::scalar(2.0));
        assert_eq!(infer_probability(&hi, &ctx, ModelId::PtxFull, &img()).unwrap(), 1.0);
        let lo = Canned(Tensor { shape: vec![2], data: vec![-1.0, 0.5] });
        assert_eq!(infer_tube(&lo, &ctx, &img()).unwrap(), TubeProbs { standard: 0.0, pigtail: 0.5 });
    }

    proptest! {
        #[test]
        fn outputs_always_in_unit_interval(vals in proptest::collection::vec(-10.0f32..10.0, 12)) {
            let ctx = StudyContext::new("s");
            let b = Canned(Tensor { shape: vec![3, 4], data: vals.clone() });
            let m = infer_map(&b, &ctx, ModelId::PtxSeg, &img()).unwrap();
            prop_assert!(m.values().iter().all(|v| (0.0..=1.0).contains(v)));
            let b = Canned(Tensor::scalar(vals[0]));
            let p = infer_probability(&b, &ctx, ModelId::View, &img()).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn backend_spec_parsing() {
        assert_eq!(BackendSpec::parse("stub", 0.0, 0).unwrap(), BackendSpec::Stub);
        assert_eq!(
            BackendSpec::parse("oracle", 0.05, 7).unwrap(),
            BackendSpec::Oracle { epsilon: 0.05, seed: 7 }
        );
        assert!(matches!(BackendSpec::parse("http://h:1", 0.0, 0).unwrap(), BackendSpec::Remote(_)));
        assert!(BackendSpec::parse("gpu", 0.0, 0).is_err());
    }
}
