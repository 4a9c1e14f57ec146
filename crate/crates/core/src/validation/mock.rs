use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use sha2::{Digest, Sha256};

use super::backend::{AsrBackend, BackendError, Capabilities, Recognition};
use super::ValidationError;
use crate::audio::{AudioBuffer, SUPPORTED_RATES};

/// Hex SHA-256 of the buffer's little-endian PCM bytes.
pub fn audio_fingerprint(audio: &AudioBuffer) -> String {
    hex::encode(Sha256::digest(audio.pcm_bytes()))
}

/// Deterministic table-driven stand-in for a cloud recognizer.
///
/// Looks the segment's [`audio_fingerprint`] up in a table; unknown audio
/// yields an empty hypothesis.
#[derive(Debug, Default)]
pub struct MockBackend {
    table: BTreeMap<String, String>,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(table: BTreeMap<String, String>) -> Self {
        MockBackend {
            table,
            calls: AtomicUsize::new(0),
        }
    }

    /// Loads a JSON object mapping fingerprint to transcript.
    pub fn from_json(bytes: &[u8]) -> Result<Self, ValidationError> {
        let table: BTreeMap<String, String> = serde_json::from_slice(bytes)
            .map_err(|e| ValidationError::MockTable(e.to_string()))?;
        Ok(Self::new(table))
    }

    pub fn from_path(path: &Path) -> Result<Self, ValidationError> {
        let bytes = fs::read(path)
            .map_err(|e| ValidationError::MockTable(format!("{}: {e}", path.display())))?;
        Self::from_json(&bytes)
    }

    /// Number of recognize calls made so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl AsrBackend for MockBackend {
    fn id(&self) -> &str {
        "mock"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            sample_rates: SUPPORTED_RATES.to_vec(),
            max_duration_ms: u64::MAX,
        }
    }

    fn recognize(&self, audio: &AudioBuffer, _language_code: &str) -> Result<Recognition, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(Recognition {
            hypothesis: self
                .table
                .get(&audio_fingerprint(audio))
                .cloned()
                .unwrap_or_default(),
            confidence: None,
        })
    }
}
