use std::sync::{Condvar, Mutex};
use std::time::Duration;

use crate::imaging::ImageGray;

use super::wire::{InferenceRequest, InferenceResponse};
use super::{Backend, BackendError, ModelId, StudyContext, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemoteConfig {
    pub max_in_flight: usize,
    pub timeout: Duration,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self { max_in_flight: 4, timeout: Duration::from_secs(30) }
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Limiter {
    max: usize,
    used: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(max: usize) -> Self {
        Self { max: max.max(1), used: Mutex::new(0), freed: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut used = self.used.lock().unwrap_or_else(|e| e.into_inner());
        while *used >= self.max {
            used = self.freed.wait(used).unwrap_or_else(|e| e.into_inner());
        }
        *used += 1;
        Permit(self)
    }

    #[cfg(test)]
    fn in_use(&self) -> usize {
        *self.used.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut used = self.0.used.lock().unwrap_or_else(|e| e.into_inner());
        *used -= 1;
        self.0.freed.notify_one();
    }
}

/// HTTP client for `POST /v1/infer`.
pub struct RemoteBackend {
    endpoint: String,
    agent: ureq::Agent,
    limiter: Limiter,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend").field("endpoint", &self.endpoint).finish()
    }
}

impl RemoteBackend {
    /// `base_url` may be the server root or the full `/v1/infer` endpoint.
    pub fn new(base_url: &str, config: RemoteConfig) -> Self {
        let trimmed = base_url.trim_end_matches('/');
        let endpoint = if trimmed.ends_with("/v1/infer") {
            trimmed.to_string()
        } else {
            format!("{trimmed}/v1/infer")
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { endpoint, agent, limiter: Limiter::new(config.max_in_flight) }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl Backend for RemoteBackend {
    fn infer(&self, _ctx: &StudyContext<'_>, model: ModelId, img: &ImageGray) -> Result<Tensor, BackendError> {
        let request = InferenceRequest::new(model, img.width(), img.height(), img.pixels());
        let _permit = self.limiter.acquire();
        let mut response = self
            .agent
            .post(&self.endpoint)
            .send_json(&request)
            .map_err(|e| BackendError::BackendUnavailable(format!("{}: {e}", self.endpoint)))?;
        let status = response.status().as_u16();
        match status {
            200..=299 => {}
            400 => return Err(BackendError::ModelUnknown(model.to_string())),
            422 => {
                return Err(BackendError::ProtocolError(format!("server rejected {model} request (422)")))
            }
            500..=599 => {
                return Err(BackendError::BackendUnavailable(format!("{} returned {status}", self.endpoint)))
            }
            other => return Err(BackendError::ProtocolError(format!("unexpected status {other}"))),
        }
        let body: InferenceResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::ProtocolError(format!("bad response body: {e}")))?;
        let data = body.decode().map_err(|e| BackendError::ProtocolError(e.to_string()))?;
        Ok(Tensor { shape: body.shape, data })
    }
}
