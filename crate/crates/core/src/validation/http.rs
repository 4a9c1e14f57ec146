//! Client for cloud speech APIs that speak the common `LINEAR16` JSON shape.
//!
//! Request:
//! `{"config":{"encoding":"LINEAR16","sampleRateHertz":16000,"languageCode":"ko-KR"},"audio":{"content":"<base64 PCM>"}}`
//!
//! Response: `{"results":[{"alternatives":[{"transcript":"...","confidence":0.9}]}]}`.
//! A body without `results` means no speech was recognized.

use std::time::Duration;

use base64::Engine;
use serde::Deserialize;
use serde_json::json;

use super::backend::{AsrBackend, BackendError, Capabilities, Recognition};
use super::ValidationError;
use crate::audio::{AudioBuffer, PIPELINE_RATE_HZ};

/// Synchronous recognition endpoints typically cap requests at one minute.
const MAX_SYNC_DURATION_MS: u64 = 60_000;

#[derive(Debug, Deserialize)]
struct Response {
    #[serde(default)]
    results: Vec<ResultItem>,
}

#[derive(Debug, Deserialize)]
struct ResultItem {
    #[serde(default)]
    alternatives: Vec<Alternative>,
}

#[derive(Debug, Deserialize)]
struct Alternative {
    #[serde(default)]
    transcript: String,
    confidence: Option<f64>,
}

/// Extracts the top alternative of each result. Long audio can come back
/// split over several results; their transcripts are joined with a space.
pub fn parse_recognize_response(body: &str) -> Result<Recognition, BackendError> {
    let resp: Response =
        serde_json::from_str(body).map_err(|e| BackendError::Malformed(e.to_string()))?;
    let top: Vec<&Alternative> = resp
        .results
        .iter()
        .filter_map(|r| r.alternatives.first())
        .collect();
    Ok(Recognition {
        hypothesis: top
            .iter()
            .map(|a| a.transcript.trim())
            .filter(|t| !t.is_empty())
            .collect::<Vec<_>>()
            .join(" "),
        confidence: top.first().and_then(|a| a.confidence),
    })
}

/// Builds the request body for one segment.
pub fn recognize_request(audio: &AudioBuffer, language_code: &str) -> serde_json::Value {
    json!({
        "config": {
            "encoding": "LINEAR16",
            "sampleRateHertz": audio.sample_rate_hz,
            "languageCode": language_code,
        },
        "audio": {
            "content": base64::engine::general_purpose::STANDARD.encode(audio.pcm_bytes()),
        }
    })
}

pub struct HttpBackend {
    url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        HttpBackend {
            url: url.into(),
            api_key,
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }

    /// Reads the API key from the environment variable `key_env`.
    pub fn from_env(url: impl Into<String>, key_env: Option<&str>) -> Result<Self, ValidationError> {
        let api_key = match key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                ValidationError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        Ok(Self::new(url, api_key, Duration::from_secs(60)))
    }
}

impl AsrBackend for HttpBackend {
    fn id(&self) -> &str {
        "http"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            sample_rates: vec![PIPELINE_RATE_HZ],
            max_duration_ms: MAX_SYNC_DURATION_MS,
        }
    }

    fn recognize(&self, audio: &AudioBuffer, language_code: &str) -> Result<Recognition, BackendError> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.set("x-goog-api-key", key);
        }
        match req.send_json(recognize_request(audio, language_code)) {
            Ok(resp) => {
                let body = resp
                    .into_string()
                    .map_err(|e| BackendError::Transport(e.to_string()))?;
                parse_recognize_response(&body)
            }
            Err(ureq::Error::Status(status, resp)) => {
                let body = resp.into_string().unwrap_or_default();
                Err(match status {
                    401 | 403 => BackendError::Auth(format!("HTTP {status}: {body}")),
                    413 => BackendError::PayloadTooLarge(format!("HTTP 413: {body}")),
                    _ => BackendError::Status { status, body },
                })
            }
            Err(ureq::Error::Transport(t)) => Err(BackendError::Transport(t.to_string())),
        }
    }
}
