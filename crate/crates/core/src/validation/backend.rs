use std::time::{Duration, Instant};

use thiserror::Error;

use crate::audio::AudioBuffer;

/// What a backend accepts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Capabilities {
    pub sample_rates: Vec<u32>,
    pub max_duration_ms: u64,
}

/// The backend's answer for one segment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Recognition {
    /// Empty when no speech was recognized.
    pub hypothesis: String,
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptionResult {
    pub hypothesis: String,
    pub confidence: Option<f64>,
    pub backend_id: String,
    pub latency_ms: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("payload too large: {0}")]
    PayloadTooLarge(String),
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("backend unavailable after {attempts} attempts: {last}")]
    Unavailable { attempts: u32, last: String },
}

impl BackendError {
    /// Transport failures, rate limiting and server errors are worth another try.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// A speech recognizer the validator can ask for transcripts.
pub trait AsrBackend: Send + Sync {
    fn id(&self) -> &str;

    fn capabilities(&self) -> Capabilities;

    /// One recognition attempt. Retrying is the caller's job.
    fn recognize(&self, audio: &AudioBuffer, language_code: &str) -> Result<Recognition, BackendError>;
}

/// Exponential backoff between attempts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub factor: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_secs(1),
            factor: 2,
        }
    }
}

impl RetryPolicy {
    /// Delay after failed attempt `attempt` (1-based).
    pub fn delay_after(&self, attempt: u32) -> Duration {
        self.base_delay
            .saturating_mul(self.factor.saturating_pow(attempt.saturating_sub(1)))
    }
}

/// Transcribes `audio`, retrying transient failures per `retry`.
///
/// Audio the backend cannot take is refused before any call is made.
pub fn transcribe(
    backend: &dyn AsrBackend,
    audio: &AudioBuffer,
    language_code: &str,
    retry: &RetryPolicy,
) -> Result<TranscriptionResult, BackendError> {
    let caps = backend.capabilities();
    if !caps.sample_rates.contains(&audio.sample_rate_hz) {
        return Err(BackendError::PayloadTooLarge(format!(
            "sample rate {} Hz not accepted by {}",
            audio.sample_rate_hz,
            backend.id()
        )));
    }
    if audio.duration_ms() > caps.max_duration_ms {
        return Err(BackendError::PayloadTooLarge(format!(
            "{} ms exceeds the {} ms limit of {}",
            audio.duration_ms(),
            caps.max_duration_ms,
            backend.id()
        )));
    }

    let started = Instant::now();
    let attempts = retry.max_attempts.max(1);
    let mut attempt = 0;
    loop {
        attempt += 1;
        match backend.recognize(audio, language_code) {
            Ok(r) => {
                return Ok(TranscriptionResult {
                    hypothesis: r.hypothesis,
                    confidence: r.confidence,
                    backend_id: backend.id().to_string(),
                    latency_ms: started.elapsed().as_millis() as u64,
                })
            }
            Err(e) if e.is_retryable() => {
                if attempt >= attempts {
                    return Err(BackendError::Unavailable {
                        attempts: attempt,
                        last: e.to_string(),
                    });
                }
                log::debug!("{} attempt {attempt} failed: {e}", backend.id());
                std::thread::sleep(retry.delay_after(attempt));
            }
            Err(e) => return Err(e),
        }
    }
}
