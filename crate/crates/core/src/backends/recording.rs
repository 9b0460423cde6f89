use std::sync::Mutex;

use crate::imaging::ImageGray;

use super::{Backend, BackendError, ModelId, StudyContext, Tensor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordedCall {
    pub study_id: String,
    pub model: ModelId,
    pub width: usize,
    pub height: usize,
}

/// Wraps another backend and records every call's model and input size.
#[derive(Debug, Default)]
pub struct RecordingBackend<B> {
    inner: B,
    calls: Mutex<Vec<RecordedCall>>,
}

impl<B> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self { inner, calls: Mutex::new(Vec::new()) }
    }

    pub fn calls(&self) -> Vec<RecordedCall> {
        self.calls.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn calls_for(&self, model: ModelId) -> Vec<RecordedCall> {
        self.calls().into_iter().filter(|c| c.model == model).collect()
    }

    pub fn clear(&self) {
        self.calls.lock().unwrap_or_else(|e| e.into_inner()).clear();
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn infer(&self, ctx: &StudyContext<'_>, model: ModelId, img: &ImageGray) -> Result<Tensor, BackendError> {
        self.calls.lock().unwrap_or_else(|e| e.into_inner()).push(RecordedCall {
            study_id: ctx.study_id.to_string(),
            model,
            width: img.width(),
            height: img.height(),
        });
        self.inner.infer(ctx, model, img)
    }
}
