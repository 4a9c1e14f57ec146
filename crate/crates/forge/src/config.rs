//! Pipeline configuration, a versioned JSON document.
//!
//! ```json
//! {
//!   "version": 1,
//!   "sources": [
//!     {"source_id": "talk01", "media": {"path": "talk01.wav"},
//!      "subtitle": {"fetch": {"command": "fetch-srt {url} -o {out}", "url": "https://..."}},
//!      "language_code": "ko-KR"}
//!   ],
//!   "converter_command": "ffmpeg -y -i {in} -ac 1 -ar 16000 {out}",
//!   "snap_window_ms": 250,
//!   "validation": {"cer_threshold": 0.25, "min_duration_ms": 500, "max_duration_ms": 30000},
//!   "backend": {"mock": {"table": "mock.json"}},
//!   "parallelism": 4,
//!   "out_dir": "out",
//!   "corpus_name": "my-corpus",
//!   "license": "CC BY-NC-ND 4.0"
//! }
//! ```
//!
//! Relative paths are resolved against the directory holding the config.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use forge_core::alignment::DEFAULT_SNAP_WINDOW_MS;
use forge_core::ValidationPolicy;
use serde::Deserialize;
use thiserror::Error;

pub const CONFIG_VERSION: u32 = 1;

/// Name of the per-source scratch directory under `out_dir`.
pub const WORK_DIR: &str = "work";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Locator {
    Path(PathBuf),
    Fetch {
        /// Template; `{out}` is the file to produce, `{url}` the url below.
        command: String,
        #[serde(default)]
        url: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub source_id: String,
    pub media: Locator,
    pub subtitle: Locator,
    pub language_code: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendConfig {
    Mock {
        /// JSON object mapping audio fingerprint to transcript.
        table: PathBuf,
    },
    Http {
        url: String,
        /// Environment variable holding the API key.
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
}

fn default_timeout() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    #[serde(default)]
    pub sources: Vec<SourceSpec>,
    /// Template with `{in}` and `{out}`; needed only for non-WAV media.
    #[serde(default)]
    pub converter_command: Option<String>,
    #[serde(default = "default_snap_window")]
    pub snap_window_ms: u64,
    #[serde(default)]
    pub validation: ValidationPolicy,
    pub backend: BackendConfig,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_corpus_name")]
    pub corpus_name: String,
    #[serde(default)]
    pub license: String,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_snap_window() -> u64 {
    DEFAULT_SNAP_WINDOW_MS
}

fn default_parallelism() -> usize {
    1
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_corpus_name() -> String {
    "corpus".to_string()
}

fn valid_source_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id != WORK_DIR
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

fn check_template(name: &str, template: &str, required: &[&str]) -> Result<(), ConfigError> {
    if shlex::split(template).is_none_or(|argv| argv.is_empty()) {
        return Err(ConfigError::Invalid(format!("{name}: cannot split command {template:?}")));
    }
    for p in required {
        if !template.contains(p) {
            return Err(ConfigError::Invalid(format!("{name}: template lacks {p}")));
        }
    }
    Ok(())
}

impl PipelineConfig {
    pub fn from_json(bytes: &[u8], base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: PipelineConfig = serde_json::from_slice(bytes)?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let bytes = fs::read(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        Self::from_json(&bytes, &base)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.version != CONFIG_VERSION {
            return Err(ConfigError::Invalid(format!(
                "unsupported version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.parallelism == 0 {
            return Err(ConfigError::Invalid("parallelism must be at least 1".into()));
        }
        self.validation
            .check()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Some(conv) = &self.converter_command {
            check_template("converter_command", conv, &["{in}", "{out}"])?;
        }
        let mut ids = BTreeSet::new();
        for s in &self.sources {
            if !valid_source_id(&s.source_id) {
                return Err(ConfigError::Invalid(format!(
                    "source id {:?} must be non-empty ASCII letters, digits, '-', '_' or '.', not start with '.', and not be {WORK_DIR:?}",
                    s.source_id
                )));
            }
            if !ids.insert(s.source_id.as_str()) {
                return Err(ConfigError::Invalid(format!("duplicate source id {}", s.source_id)));
            }
            if s.language_code.trim().is_empty() {
                return Err(ConfigError::Invalid(format!("{}: empty language_code", s.source_id)));
            }
            for (what, loc) in [("media", &s.media), ("subtitle", &s.subtitle)] {
                if let Locator::Fetch { command, .. } = loc {
                    check_template(&format!("{}.{what}", s.source_id), command, &["{out}"])?;
                }
            }
        }
        if let BackendConfig::Http { url, .. } = &self.backend {
            if !(url.starts_with("http://") || url.starts_with("https://")) {
                return Err(ConfigError::Invalid(format!("backend url {url:?} is not http(s)")));
            }
        }
        Ok(())
    }

    /// Resolves a config-relative path.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.out_dir)
    }

    pub fn work_dir(&self, source_id: &str) -> PathBuf {
        self.out_dir().join(WORK_DIR).join(source_id)
    }
}
