//! JSON/HTTP clients for remote model servers.
//!
//! Three POST endpoints, all idempotent and deterministic per
//! `(model version, request)`:
//!
//! - `/v1/classify`  `{"texts": [string]}` -> `{"probs": [[f64]]}`
//! - `/v1/fill_mask` `{"words": [string], "mask_index": int, "top_k": int}`
//!   -> `{"candidates": [{"word": string, "score": f64}]}`
//! - `/v1/gradients` `{"words": [string], "target_label": int}`
//!   -> `{"loss": f64, "word_grad_norms": [f64]}`
//!
//! `mask_index` and `target_label` are 1-based on the wire. Errors come
//! back as non-2xx with `{"error": string}`. Responses are validated
//! against the schema before use; classify rows may drift from the simplex
//! by up to 1e-6 and are renormalized client-side.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{BackendError, Error, Result};
use crate::model::{ConfidenceVector, GradientCapableVictim, VictimModel};
use crate::reconstruction::{FillCandidate, MaskedLm};
use crate::text::TokenizedText;

use super::cache::ResponseCache;

pub const CLASSIFY_ENDPOINT: &str = "/v1/classify";
pub const FILL_MASK_ENDPOINT: &str = "/v1/fill_mask";
pub const GRADIENTS_ENDPOINT: &str = "/v1/gradients";

/// Tolerance allowed on classify rows before renormalization.
pub const WIRE_SIMPLEX_TOLERANCE: f64 = 1e-6;

pub mod protocol {
    use super::*;

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct ClassifyRequest {
        pub texts: Vec<String>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct ClassifyResponse {
        pub probs: Vec<Vec<f64>>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct FillMaskRequest {
        pub words: Vec<String>,
        /// 1-based position of the mask token.
        pub mask_index: usize,
        pub top_k: usize,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct CandidateJson {
        pub word: String,
        pub score: f64,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct FillMaskResponse {
        pub candidates: Vec<CandidateJson>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct GradientsRequest {
        pub words: Vec<String>,
        /// 1-based label the loss is taken against.
        pub target_label: usize,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct GradientsResponse {
        pub loss: f64,
        pub word_grad_norms: Vec<f64>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct ErrorResponse {
        pub error: String,
    }
}

#[derive(Debug, Clone)]
pub struct RemoteBackendConfig {
    pub base_url: String,
    pub timeout: Duration,
    pub max_in_flight: usize,
    /// Additional attempts after the first on retryable failures
    /// (timeouts, transport errors, 5xx).
    pub retries: u32,
    pub retry_backoff: Duration,
    pub auth_token: Option<String>,
}

impl RemoteBackendConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            timeout: Duration::from_secs(10),
            max_in_flight: 4,
            retries: 2,
            retry_backoff: Duration::from_millis(100),
            auth_token: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.timeout.is_zero() {
            return Err(Error::InvalidConfig("timeout must be positive".into()));
        }
        if self.max_in_flight == 0 {
            return Err(Error::InvalidConfig("max_in_flight must be at least 1".into()));
        }
        Ok(())
    }
}

/// Counting semaphore bounding concurrent requests.
struct InFlightGate {
    state: Mutex<usize>,
    cv: Condvar,
    max: usize,
}

impl InFlightGate {
    fn new(max: usize) -> Self {
        Self {
            state: Mutex::new(0),
            cv: Condvar::new(),
            max,
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut count = self.state.lock().expect("gate poisoned");
        while *count >= self.max {
            count = self.cv.wait(count).expect("gate poisoned");
        }
        *count += 1;
        GateGuard { gate: self }
    }
}

struct GateGuard<'a> {
    gate: &'a InFlightGate,
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        let mut count = self.gate.state.lock().expect("gate poisoned");
        *count -= 1;
        self.gate.cv.notify_one();
    }
}

pub struct RemoteClient {
    cfg: RemoteBackendConfig,
    http: reqwest::blocking::Client,
    cache: Option<Arc<ResponseCache>>,
    gate: InFlightGate,
    requests_sent: AtomicU64,
}

impl RemoteClient {
    pub fn new(cfg: RemoteBackendConfig) -> Result<Self> {
        Self::build(cfg, None)
    }

    pub fn with_cache(cfg: RemoteBackendConfig, cache: Arc<ResponseCache>) -> Result<Self> {
        Self::build(cfg, Some(cache))
    }

    fn build(cfg: RemoteBackendConfig, cache: Option<Arc<ResponseCache>>) -> Result<Self> {
        cfg.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| BackendError::Other(format!("http client: {e}")))?;
        Ok(Self {
            gate: InFlightGate::new(cfg.max_in_flight),
            cfg,
            http,
            cache,
            requests_sent: AtomicU64::new(0),
        })
    }

    /// Network requests actually sent (cache hits excluded).
    pub fn requests_sent(&self) -> u64 {
        self.requests_sent.load(Ordering::Relaxed)
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_deref()
    }

    fn post_raw(&self, endpoint: &str, body: &[u8]) -> Result<Vec<u8>> {
        let url = format!("{}{}", self.cfg.base_url.trim_end_matches('/'), endpoint);
        let mut attempt = 0u32;
        loop {
            let _slot = self.gate.acquire();
            self.requests_sent.fetch_add(1, Ordering::Relaxed);
            let mut request = self
                .http
                .post(&url)
                .header("content-type", "application/json")
                .body(body.to_vec());
            if let Some(token) = &self.cfg.auth_token {
                request = request.bearer_auth(token);
            }
            let outcome = request.send();
            drop(_slot);

            let retryable_err = match outcome {
                Ok(response) => {
                    let status = response.status();
                    let bytes = response
                        .bytes()
                        .map_err(|e| BackendError::Transport {
                            endpoint: endpoint.to_string(),
                            reason: e.to_string(),
                        })?
                        .to_vec();
                    if status.is_success() {
                        return Ok(bytes);
                    }
                    let message = serde_json::from_slice::<protocol::ErrorResponse>(&bytes)
                        .map(|e| e.error)
                        .unwrap_or_else(|_| String::from_utf8_lossy(&bytes).into_owned());
                    let err = BackendError::HttpStatus {
                        endpoint: endpoint.to_string(),
                        status: status.as_u16(),
                        message,
                    };
                    if status.is_server_error() {
                        err
                    } else {
                        return Err(err.into());
                    }
                }
                Err(e) if e.is_timeout() => BackendError::Timeout {
                    endpoint: endpoint.to_string(),
                },
                Err(e) => BackendError::Transport {
                    endpoint: endpoint.to_string(),
                    reason: e.to_string(),
                },
            };

            if attempt >= self.cfg.retries {
                return Err(retryable_err.into());
            }
            attempt += 1;
            std::thread::sleep(self.cfg.retry_backoff.saturating_mul(attempt));
        }
    }

    /// POSTs through the cache when one is configured. All protocol calls
    /// are idempotent, so cached replays are safe.
    fn post(&self, endpoint: &str, body: Vec<u8>) -> Result<Vec<u8>> {
        match &self.cache {
            Some(cache) => cache.get_or_fetch(endpoint, &body, || self.post_raw(endpoint, &body)),
            None => self.post_raw(endpoint, &body),
        }
    }

    fn schema_violation(endpoint: &str, reason: impl Into<String>) -> Error {
        BackendError::SchemaViolation {
            endpoint: endpoint.to_string(),
            reason: reason.into(),
        }
        .into()
    }

    pub fn classify(&self, texts: &[String]) -> Result<Vec<ConfidenceVector>> {
        let body = serde_json::to_vec(&protocol::ClassifyRequest {
            texts: texts.to_vec(),
        })?;
        let bytes = self.post(CLASSIFY_ENDPOINT, body)?;
        let response: protocol::ClassifyResponse = serde_json::from_slice(&bytes)
            .map_err(|e| Self::schema_violation(CLASSIFY_ENDPOINT, e.to_string()))?;
        if response.probs.len() != texts.len() {
            return Err(Self::schema_violation(
                CLASSIFY_ENDPOINT,
                format!("{} rows for {} texts", response.probs.len(), texts.len()),
            ));
        }
        response
            .probs
            .into_iter()
            .map(|row| {
                if row.len() < 2 {
                    return Err(Self::schema_violation(
                        CLASSIFY_ENDPOINT,
                        "row has fewer than 2 classes",
                    ));
                }
                if row.iter().any(|p| !p.is_finite() || *p < -WIRE_SIMPLEX_TOLERANCE) {
                    return Err(Self::schema_violation(
                        CLASSIFY_ENDPOINT,
                        "row contains negative or non-finite entries",
                    ));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > WIRE_SIMPLEX_TOLERANCE {
                    return Err(Self::schema_violation(
                        CLASSIFY_ENDPOINT,
                        format!("row sums to {sum}, expected 1 +/- {WIRE_SIMPLEX_TOLERANCE}"),
                    ));
                }
                let normalized: Vec<f64> = row.iter().map(|p| p.max(0.0) / sum).collect();
                ConfidenceVector::new(normalized)
            })
            .collect()
    }

    /// `mask_index` is 0-based here; the wire carries it 1-based.
    pub fn fill_mask(
        &self,
        words: &[String],
        mask_index: usize,
        k: usize,
    ) -> Result<Vec<FillCandidate>> {
        let body = serde_json::to_vec(&protocol::FillMaskRequest {
            words: words.to_vec(),
            mask_index: mask_index + 1,
            top_k: k,
        })?;
        let bytes = self.post(FILL_MASK_ENDPOINT, body)?;
        let response: protocol::FillMaskResponse = serde_json::from_slice(&bytes)
            .map_err(|e| Self::schema_violation(FILL_MASK_ENDPOINT, e.to_string()))?;
        let mut out = Vec::with_capacity(response.candidates.len().min(k));
        let mut last = f64::INFINITY;
        for c in response.candidates.into_iter().take(k) {
            if c.word.is_empty() || c.word.chars().any(char::is_whitespace) {
                return Err(Self::schema_violation(
                    FILL_MASK_ENDPOINT,
                    format!("candidate {:?} is not a whole word", c.word),
                ));
            }
            if !c.score.is_finite() || c.score > last {
                return Err(Self::schema_violation(
                    FILL_MASK_ENDPOINT,
                    "candidate scores must be finite and non-increasing",
                ));
            }
            last = c.score;
            out.push(FillCandidate {
                word: c.word,
                score: c.score,
            });
        }
        Ok(out)
    }

    pub fn gradients(&self, words: &[String], target_label: usize) -> Result<(f64, Vec<f64>)> {
        let body = serde_json::to_vec(&protocol::GradientsRequest {
            words: words.to_vec(),
            target_label,
        })?;
        let bytes = self.post(GRADIENTS_ENDPOINT, body)?;
        let response: protocol::GradientsResponse = serde_json::from_slice(&bytes)
            .map_err(|e| Self::schema_violation(GRADIENTS_ENDPOINT, e.to_string()))?;
        if response.word_grad_norms.len() != words.len() {
            return Err(Self::schema_violation(
                GRADIENTS_ENDPOINT,
                format!(
                    "{} norms for {} words",
                    response.word_grad_norms.len(),
                    words.len()
                ),
            ));
        }
        if response
            .word_grad_norms
            .iter()
            .any(|g| !g.is_finite() || *g < 0.0)
        {
            return Err(Self::schema_violation(
                GRADIENTS_ENDPOINT,
                "gradient norms must be finite and non-negative",
            ));
        }
        Ok((response.loss, response.word_grad_norms))
    }
}

/// Victim backed by a remote classify/gradients server.
pub struct RemoteVictim {
    client: Arc<RemoteClient>,
    classes: OnceLock<usize>,
}

impl RemoteVictim {
    pub fn new(client: Arc<RemoteClient>) -> Self {
        Self {
            client,
            classes: OnceLock::new(),
        }
    }
}

impl VictimModel for RemoteVictim {
    fn classify_batch(&self, texts: &[TokenizedText]) -> Result<Vec<ConfidenceVector>> {
        let raw: Vec<String> = texts.iter().map(|t| t.raw().to_string()).collect();
        let result = self.client.classify(&raw)?;
        if let Some(first) = result.first() {
            let _ = self.classes.set(first.class_count());
        }
        Ok(result)
    }

    /// Learned from the first classify response; 0 until one is observed.
    fn class_count(&self) -> usize {
        self.classes.get().copied().unwrap_or(0)
    }
}

impl GradientCapableVictim for RemoteVictim {
    fn loss_and_gradient_norms(
        &self,
        text: &TokenizedText,
        target_label: usize,
    ) -> Result<(f64, Vec<f64>)> {
        self.client.gradients(text.words(), target_label)
    }
}

/// Masked LM backed by a remote fill-mask server.
pub struct RemoteMaskedLm {
    client: Arc<RemoteClient>,
}

impl RemoteMaskedLm {
    pub fn new(client: Arc<RemoteClient>) -> Self {
        Self { client }
    }
}

impl MaskedLm for RemoteMaskedLm {
    fn fill(&self, rendered: &[String], mask_index: usize, k: usize) -> Result<Vec<FillCandidate>> {
        self.client.fill_mask(rendered, mask_index, k)
    }
}
