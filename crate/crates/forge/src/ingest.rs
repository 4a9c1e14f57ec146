//! Acquisition: fetches or copies the two input streams into the work
//! directory and conditions the audio to 16 kHz mono PCM WAV.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use forge_core::audio::{decode_wav, encode_wav, AudioError, PIPELINE_RATE_HZ};
use forge_core::fsutil::write_atomic;
use thiserror::Error;

use crate::config::{Locator, PipelineConfig, SourceSpec};

pub const AUDIO_FILE: &str = "audio.wav";
pub const SUBTITLE_FILE: &str = "subtitle.srt";

/// Longest stderr excerpt kept in an error.
const STDERR_LIMIT: usize = 4096;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("fetch of {what} failed ({status}): {stderr}")]
    FetchFailed { what: &'static str, status: String, stderr: String },
    #[error("conversion failed ({status}): {stderr}")]
    ConvertFailed { status: String, stderr: String },
    #[error("subtitle not found: {}", .0.display())]
    MissingSubtitle(PathBuf),
    #[error("media not found: {}", .0.display())]
    MissingMedia(PathBuf),
    #[error("bad command template {0:?}")]
    BadTemplate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ingested {
    pub wav_path: PathBuf,
    pub srt_path: PathBuf,
    /// Whether the external converter was used.
    pub converted: bool,
}

/// Splits `template` like a POSIX shell and substitutes `{name}`
/// placeholders inside each word, so substituted paths never split.
pub fn render_command(template: &str, vars: &[(&str, &str)]) -> Result<Vec<String>, IngestError> {
    let words = shlex::split(template)
        .filter(|w| !w.is_empty())
        .ok_or_else(|| IngestError::BadTemplate(template.to_string()))?;
    Ok(words
        .into_iter()
        .map(|w| {
            vars.iter()
                .fold(w, |acc, (k, v)| acc.replace(&format!("{{{k}}}"), v))
        })
        .collect())
}

struct Failure {
    status: String,
    stderr: String,
}

fn run(argv: &[String], cwd: &Path) -> Result<(), Failure> {
    log::debug!("running {argv:?}");
    let out = Command::new(&argv[0])
        .args(&argv[1..])
        .current_dir(cwd)
        .output()
        .map_err(|e| Failure {
            status: "not started".into(),
            stderr: format!("{}: {e}", argv[0]),
        })?;
    if out.status.success() {
        return Ok(());
    }
    let mut stderr = String::from_utf8_lossy(&out.stderr).trim().to_string();
    if stderr.len() > STDERR_LIMIT {
        let mut cut = STDERR_LIMIT;
        while !stderr.is_char_boundary(cut) {
            cut -= 1;
        }
        stderr.truncate(cut);
    }
    Err(Failure {
        status: out.status.to_string(),
        stderr,
    })
}

fn fetch(
    what: &'static str,
    loc: &Locator,
    config: &PipelineConfig,
    dest: &Path,
) -> Result<Option<PathBuf>, IngestError> {
    match loc {
        Locator::Path(p) => {
            let p = config.resolve(p);
            Ok(p.is_file().then_some(p))
        }
        Locator::Fetch { command, url } => {
            let out = dest.to_string_lossy();
            let argv = render_command(command, &[("out", &out), ("url", url)])?;
            run(&argv, &command_dir(config)).map_err(|f| IngestError::FetchFailed {
                what,
                status: f.status,
                stderr: f.stderr,
            })?;
            Ok(dest.is_file().then(|| dest.to_path_buf()))
        }
    }
}

/// External commands run from the config's directory.
fn command_dir(config: &PipelineConfig) -> PathBuf {
    if config.base_dir.as_os_str().is_empty() {
        PathBuf::from(".")
    } else {
        config.base_dir.clone()
    }
}

/// Brings one source into `work_dir` as `audio.wav` and `subtitle.srt`.
///
/// WAV input at a supported rate is conditioned natively; anything else
/// goes through the configured converter first.
pub fn ingest(spec: &SourceSpec, config: &PipelineConfig, work_dir: &Path) -> Result<Ingested, IngestError> {
    fs::create_dir_all(work_dir)?;
    let work_dir = work_dir.canonicalize()?;

    let fetched_srt = work_dir.join("subtitle.fetched");
    let srt_src = fetch("subtitle", &spec.subtitle, config, &fetched_srt)?.ok_or_else(|| {
        IngestError::MissingSubtitle(match &spec.subtitle {
            Locator::Path(p) => config.resolve(p),
            Locator::Fetch { .. } => fetched_srt.clone(),
        })
    })?;
    let srt_path = work_dir.join(SUBTITLE_FILE);
    write_atomic(&srt_path, &fs::read(&srt_src)?)?;

    let fetched_media = work_dir.join("media.fetched");
    let media = fetch("media", &spec.media, config, &fetched_media)?.ok_or_else(|| {
        IngestError::MissingMedia(match &spec.media {
            Locator::Path(p) => config.resolve(p),
            Locator::Fetch { .. } => fetched_media.clone(),
        })
    })?;

    let (audio, converted) = match decode_wav(&fs::read(&media)?) {
        Ok(a) => (a, false),
        Err(native) => {
            let Some(template) = &config.converter_command else {
                return Err(IngestError::ConvertFailed {
                    status: "no converter_command configured".into(),
                    stderr: format!("{}: {native}", media.display()),
                });
            };
            let converted = work_dir.join("media.converted.wav");
            let argv = render_command(
                template,
                &[("in", &media.to_string_lossy()), ("out", &converted.to_string_lossy())],
            )?;
            run(&argv, &command_dir(config)).map_err(|f| IngestError::ConvertFailed {
                status: f.status,
                stderr: f.stderr,
            })?;
            let bytes = fs::read(&converted).map_err(|e| IngestError::ConvertFailed {
                status: "no output".into(),
                stderr: format!("{}: {e}", converted.display()),
            })?;
            let a = decode_wav(&bytes).map_err(|e| IngestError::ConvertFailed {
                status: "unusable output".into(),
                stderr: e.to_string(),
            })?;
            (a, true)
        }
    };
    let audio = if audio.sample_rate_hz == PIPELINE_RATE_HZ { audio } else { audio.to_pipeline_rate() };
    let wav_path = work_dir.join(AUDIO_FILE);
    write_atomic(&wav_path, &encode_wav(&audio))?;
    for scratch in [fetched_srt, fetched_media, work_dir.join("media.converted.wav")] {
        if scratch.exists() {
            fs::remove_file(scratch)?;
        }
    }
    Ok(Ingested {
        wav_path,
        srt_path,
        converted,
    })
}
