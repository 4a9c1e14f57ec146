//! Runs the stages for every configured source and assembles the corpus.
//!
//! Each source gets a work directory `<out>/work/<source_id>/` holding the
//! intermediate files of every stage plus a `.stage-<name>` marker written
//! once the stage has finished. Fragments land in `<out>/<source_id>/`,
//! and `manifest.json`, `manifest.tsv` and `yield.csv` in `<out>/`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use forge_core::alignment::{build_sync_map, load_sync_map, save_sync_map, snap_boundaries, AlignmentError};
use forge_core::audio::{read_wav, write_wav, AudioBuffer, AudioError};
use forge_core::corpus::{
    compute_yield, emit_fragments, fragment_id, write_manifest, write_yield_csv, CorpusError, SegmentStats,
};
use forge_core::fsutil::write_atomic;
use forge_core::subtitle::{normalize_text, parse_srt, SubtitleError};
use forge_core::validation::{validate_map, HttpBackend, MockBackend, RetryPolicy, ValidationError};
use forge_core::{AsrBackend, CorpusManifest, EntryStatus, FragmentRecord, SyncMap, ValidationRecord, YieldReport};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{BackendConfig, PipelineConfig, SourceSpec};
use crate::ingest::{ingest, IngestError, AUDIO_FILE, SUBTITLE_FILE};

pub const SYNCMAP_FILE: &str = "syncmap.json";
pub const CANDIDATES_FILE: &str = "candidates.json";
pub const VALIDATED_FILE: &str = "validated.json";
pub const RECORDS_FILE: &str = "validation.json";
pub const VALIDATION_KEY_FILE: &str = "validation.key";
pub const FRAGMENTS_FILE: &str = "fragments.json";
pub const REPORT_FILE: &str = "yield.json";
/// Per-candidate audio and text written by the transform stage.
pub const SEGMENTS_DIR: &str = "segments";

pub const MANIFEST_FILE: &str = "manifest.json";
pub const YIELD_CSV_FILE: &str = "yield.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Align,
    Transform,
    Validate,
    Build,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Ingest, Stage::Align, Stage::Transform, Stage::Validate, Stage::Build];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Align => "align",
            Stage::Transform => "transform",
            Stage::Validate => "validate",
            Stage::Build => "build",
        }
    }

    fn marker(self) -> String {
        format!(".stage-{}", self.name())
    }

    /// Files in the work directory a finished stage leaves behind.
    fn outputs(self) -> &'static [&'static str] {
        match self {
            Stage::Ingest => &[AUDIO_FILE, SUBTITLE_FILE],
            Stage::Align => &[SYNCMAP_FILE],
            Stage::Transform => &[CANDIDATES_FILE],
            Stage::Validate => &[VALIDATED_FILE, RECORDS_FILE],
            Stage::Build => &[FRAGMENTS_FILE, REPORT_FILE],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage {s:?}; expected one of ingest, align, transform, validate, build"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageResult {
    pub stage: Stage,
    pub source_id: String,
    pub n_in: usize,
    pub n_out: usize,
    pub warnings: usize,
    pub elapsed_ms: u64,
    /// Reused from an earlier run by `--resume`.
    #[serde(default)]
    pub skipped: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Skip stages whose marker and outputs are present.
    pub resume: bool,
    pub start_from: Option<Stage>,
    pub stop_after: Option<Stage>,
}

impl RunOptions {
    /// Starting at validate reruns transform too, so boundary edits made
    /// with the tuner after `--stop-after align` reach the validator.
    fn first_stage(&self) -> Stage {
        match self.start_from {
            Some(Stage::Validate) => Stage::Transform,
            Some(s) => s,
            None => Stage::Ingest,
        }
    }

    fn last_stage(&self) -> Stage {
        self.stop_after.unwrap_or(Stage::Build)
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage} needs {}; run the earlier stages first", .path.display())]
    MissingInput { stage: Stage, path: PathBuf },
    #[error("backend: {0}")]
    Backend(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Subtitle(#[from] SubtitleError),
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFailure {
    pub source_id: String,
    pub stage: Option<Stage>,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct RunReport {
    pub results: Vec<StageResult>,
    pub failures: Vec<SourceFailure>,
    /// Present when the run included the build stage.
    pub manifest: Option<CorpusManifest>,
    pub yields: Vec<YieldReport>,
}

impl RunReport {
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

struct Ctx<'a> {
    config: &'a PipelineConfig,
    opts: &'a RunOptions,
    backend: OnceLock<Result<Arc<dyn AsrBackend>, String>>,
}

impl Ctx<'_> {
    fn backend(&self) -> Result<Arc<dyn AsrBackend>, PipelineError> {
        self.backend
            .get_or_init(|| make_backend(self.config))
            .clone()
            .map_err(PipelineError::Backend)
    }
}

fn make_backend(config: &PipelineConfig) -> Result<Arc<dyn AsrBackend>, String> {
    match &config.backend {
        BackendConfig::Mock { table } => MockBackend::from_path(&config.resolve(table))
            .map(|m| Arc::new(m) as Arc<dyn AsrBackend>)
            .map_err(|e| e.to_string()),
        BackendConfig::Http { url, api_key_env, timeout_secs } => {
            let key = match api_key_env {
                Some(var) => Some(std::env::var(var).map_err(|_| format!("environment variable {var} is not set"))?),
                None => None,
            };
            Ok(Arc::new(HttpBackend::new(url.clone(), key, Duration::from_secs(*timeout_secs))))
        }
    }
}

/// Identifies everything a validation result depends on besides the
/// backend's answers, so validation can continue incrementally only when
/// none of it changed.
fn validation_key(config: &PipelineConfig, spec: &SourceSpec, candidates: &[u8]) -> Result<String, PipelineError> {
    let mut h = Sha256::new();
    h.update(candidates);
    h.update(serde_json::to_vec(&config.validation)?);
    h.update(spec.language_code.as_bytes());
    match &config.backend {
        BackendConfig::Mock { table } => {
            h.update(b"mock\0");
            h.update(fs::read(config.resolve(table)).unwrap_or_default());
        }
        BackendConfig::Http { url, api_key_env, .. } => {
            h.update(b"http\0");
            h.update(url.as_bytes());
            h.update(api_key_env.as_deref().unwrap_or("").as_bytes());
        }
    }
    Ok(hex::encode(h.finalize()))
}

fn read_input(work: &Path, name: &str, stage: Stage) -> Result<Vec<u8>, PipelineError> {
    let path = work.join(name);
    fs::read(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => PipelineError::MissingInput { stage, path },
        _ => e.into(),
    })
}

fn read_audio(work: &Path, stage: Stage) -> Result<AudioBuffer, PipelineError> {
    let path = work.join(AUDIO_FILE);
    if !path.is_file() {
        return Err(PipelineError::MissingInput { stage, path });
    }
    Ok(read_wav(&path)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)?;
    Ok(())
}

struct Counts {
    n_in: usize,
    n_out: usize,
    warnings: usize,
}

fn stage_align(ctx: &Ctx, spec: &SourceSpec, work: &Path) -> Result<Counts, PipelineError> {
    let stage = Stage::Align;
    let parsed = parse_srt(&spec.source_id, &read_input(work, SUBTITLE_FILE, stage)?)?;
    for w in &parsed.warnings {
        log::warn!("{}: subtitle line {}: {:?}", spec.source_id, w.line, w.problem);
    }
    let audio = read_audio(work, stage)?;
    let map = build_sync_map(&parsed.document, AUDIO_FILE, normalize_text)?;
    let map = snap_boundaries(&map, &audio, ctx.config.snap_window_ms);
    write_atomic(&work.join(SYNCMAP_FILE), &save_sync_map(&map))?;
    Ok(Counts {
        n_in: parsed.document.len(),
        n_out: map.entries.len(),
        warnings: parsed.warnings.len(),
    })
}

fn stage_transform(spec: &SourceSpec, work: &Path) -> Result<Counts, PipelineError> {
    let stage = Stage::Transform;
    let map = load_sync_map(&read_input(work, SYNCMAP_FILE, stage)?)?;
    let audio = read_audio(work, stage)?;
    let (mut map, clipped) = map.clip_to(audio.duration());
    if clipped > 0 {
        log::warn!("{}: {clipped} entries clipped to the audio length", spec.source_id);
    }
    // Text may have been edited by hand since alignment.
    for e in &mut map.entries {
        let text = normalize_text(&e.text).text;
        if text.is_empty() {
            e.status = EntryStatus::Rejected;
        } else {
            e.text = text;
        }
    }
    map.validate()?;

    let seg_dir = work.join(SEGMENTS_DIR);
    if seg_dir.exists() {
        fs::remove_dir_all(&seg_dir)?;
    }
    fs::create_dir_all(&seg_dir)?;
    let pending: Vec<_> = map.entries.iter().filter(|e| e.status == EntryStatus::Pending).collect();
    pending.par_iter().try_for_each(|e| -> Result<(), PipelineError> {
        let id = fragment_id(&map.source_id, e.id);
        write_wav(&audio.slice_ms(e.begin, e.end)?, &seg_dir.join(format!("{id}.wav")))?;
        write_atomic(&seg_dir.join(format!("{id}.txt")), format!("{}\n", e.text).as_bytes())?;
        Ok(())
    })?;
    write_atomic(&work.join(CANDIDATES_FILE), &save_sync_map(&map))?;
    Ok(Counts {
        n_in: map.entries.len(),
        n_out: pending.len(),
        warnings: clipped,
    })
}

fn stage_validate(ctx: &Ctx, spec: &SourceSpec, work: &Path) -> Result<Counts, PipelineError> {
    let stage = Stage::Validate;
    let candidates = read_input(work, CANDIDATES_FILE, stage)?;
    let key = validation_key(ctx.config, spec, &candidates)?;
    let key_path = work.join(VALIDATION_KEY_FILE);

    // Continue a previous run over the same inputs: only entries still
    // pending (backend failures) are sent again.
    let previous = fs::read_to_string(&key_path).ok().filter(|k| k.trim() == key).and_then(|_| {
        let map = load_sync_map(&fs::read(work.join(VALIDATED_FILE)).ok()?).ok()?;
        let recs: Vec<ValidationRecord> = serde_json::from_slice(&fs::read(work.join(RECORDS_FILE)).ok()?).ok()?;
        Some((map, recs))
    });
    let (map, mut records) = match previous {
        Some((map, recs)) => (map, recs),
        None => (load_sync_map(&candidates)?, Vec::new()),
    };
    let n_in = map.count_with_status(EntryStatus::Pending);

    let audio = read_audio(work, stage)?;
    let mut policy = ctx.config.validation.clone();
    policy.language_code = spec.language_code.clone();
    let backend = ctx.backend()?;
    let (out, fresh) = validate_map(
        &map,
        &audio,
        backend.as_ref(),
        &policy,
        &RetryPolicy::default(),
        ctx.config.parallelism,
    )?;

    let fresh_ids: BTreeSet<u32> = fresh.iter().map(|r| r.entry_id).collect();
    records.retain(|r| !fresh_ids.contains(&r.entry_id));
    records.extend(fresh.iter().cloned());
    let order: BTreeMap<u32, usize> = out.entries.iter().enumerate().map(|(i, e)| (e.id, i)).collect();
    records.sort_by_key(|r| order.get(&r.entry_id).copied().unwrap_or(usize::MAX));

    write_atomic(&work.join(VALIDATED_FILE), &save_sync_map(&out))?;
    write_json(&work.join(RECORDS_FILE), &records)?;
    write_atomic(&key_path, format!("{key}\n").as_bytes())?;
    let retry_later = out.count_with_status(EntryStatus::Pending);
    if retry_later > 0 {
        log::warn!("{}: {retry_later} entries left pending after backend errors", spec.source_id);
    }
    Ok(Counts {
        n_in,
        n_out: fresh.iter().filter(|r| r.accepted).count(),
        warnings: retry_later,
    })
}

fn stage_build(ctx: &Ctx, spec: &SourceSpec, work: &Path) -> Result<Counts, PipelineError> {
    let stage = Stage::Build;
    let map: SyncMap = load_sync_map(&read_input(work, VALIDATED_FILE, stage)?)?;
    let audio = read_audio(work, stage)?;
    let fragments = emit_fragments(&map, &audio, &ctx.config.out_dir())?;
    let n_source = parse_srt(&spec.source_id, &read_input(work, SUBTITLE_FILE, stage)?)?.document.len();
    let report = compute_yield(
        &spec.source_id,
        SegmentStats {
            count: n_source as u64,
            duration_ms: audio.duration_ms(),
        },
        SegmentStats {
            count: fragments.len() as u64,
            duration_ms: fragments.iter().map(|f| f.duration_ms).sum(),
        },
    )?;
    write_json(&work.join(FRAGMENTS_FILE), &fragments)?;
    write_json(&work.join(REPORT_FILE), &report)?;
    Ok(Counts {
        n_in: map.count_with_status(EntryStatus::Accepted),
        n_out: fragments.len(),
        warnings: 0,
    })
}

fn run_stage(ctx: &Ctx, spec: &SourceSpec, work: &Path, stage: Stage) -> Result<Counts, PipelineError> {
    match stage {
        Stage::Ingest => {
            ingest(spec, ctx.config, work)?;
            Ok(Counts { n_in: 2, n_out: 2, warnings: 0 })
        }
        Stage::Align => stage_align(ctx, spec, work),
        Stage::Transform => stage_transform(spec, work),
        Stage::Validate => stage_validate(ctx, spec, work),
        Stage::Build => stage_build(ctx, spec, work),
    }
}

fn finished(work: &Path, stage: Stage) -> Option<StageResult> {
    if !stage.outputs().iter().all(|f| work.join(f).is_file()) {
        return None;
    }
    let mut prev: StageResult = serde_json::from_slice(&fs::read(work.join(stage.marker())).ok()?).ok()?;
    prev.skipped = true;
    Some(prev)
}

fn run_source(ctx: &Ctx, spec: &SourceSpec) -> (Vec<StageResult>, Option<SourceFailure>) {
    let work = ctx.config.work_dir(&spec.source_id);
    let mut results = Vec::new();
    let mut upstream_ran = false;
    let fail = |stage, e: PipelineError| SourceFailure {
        source_id: spec.source_id.clone(),
        stage,
        message: e.to_string(),
    };
    if let Err(e) = fs::create_dir_all(&work) {
        return (results, Some(fail(None, e.into())));
    }
    for stage in Stage::ALL {
        if stage < ctx.opts.first_stage() {
            continue;
        }
        if stage > ctx.opts.last_stage() {
            break;
        }
        if ctx.opts.resume && !upstream_ran {
            if let Some(prev) = finished(&work, stage) {
                log::info!("{}: {stage} already done", spec.source_id);
                results.push(prev);
                continue;
            }
        }
        for later in Stage::ALL.into_iter().filter(|s| *s >= stage) {
            let _ = fs::remove_file(work.join(later.marker()));
        }
        let started = Instant::now();
        log::info!("{}: {stage}", spec.source_id);
        match run_stage(ctx, spec, &work, stage) {
            Ok(c) => {
                let r = StageResult {
                    stage,
                    source_id: spec.source_id.clone(),
                    n_in: c.n_in,
                    n_out: c.n_out,
                    warnings: c.warnings,
                    elapsed_ms: started.elapsed().as_millis() as u64,
                    skipped: false,
                };
                let marker = serde_json::to_vec_pretty(&r).map_err(PipelineError::from).and_then(|b| {
                    write_atomic(&work.join(stage.marker()), &b).map_err(PipelineError::from)
                });
                if let Err(e) = marker {
                    return (results, Some(fail(Some(stage), e)));
                }
                results.push(r);
                upstream_ran = true;
            }
            Err(e) => return (results, Some(fail(Some(stage), e))),
        }
    }
    (results, None)
}

/// Runs the configured stages for every source, in parallel up to
/// `config.parallelism`. A failing source does not stop the others; its
/// failure is reported and it is left out of the manifest.
pub fn run_pipeline(config: &PipelineConfig, opts: &RunOptions) -> Result<RunReport, PipelineError> {
    let ctx = Ctx {
        config,
        opts,
        backend: OnceLock::new(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| PipelineError::Io(std::io::Error::other(e)))?;
    let outcomes: Vec<_> = pool.install(|| config.sources.par_iter().map(|s| run_source(&ctx, s)).collect());

    let mut report = RunReport::default();
    let mut fragments: Vec<FragmentRecord> = Vec::new();
    let building = opts.last_stage() == Stage::Build;
    for (spec, (results, failure)) in config.sources.iter().zip(outcomes) {
        report.results.extend(results);
        if let Some(f) = failure {
            log::error!("{}: {}", f.source_id, f.message);
            report.failures.push(f);
            continue;
        }
        if building {
            let work = config.work_dir(&spec.source_id);
            let frags: Vec<FragmentRecord> =
                serde_json::from_slice(&read_input(&work, FRAGMENTS_FILE, Stage::Build)?)?;
            report.yields.push(serde_json::from_slice(&read_input(&work, REPORT_FILE, Stage::Build)?)?);
            fragments.extend(frags);
        }
    }
    if building {
        let out = config.out_dir();
        fs::create_dir_all(&out)?;
        let manifest = CorpusManifest::new(config.corpus_name.clone(), config.license.clone(), fragments)?;
        write_manifest(&manifest, &out.join(MANIFEST_FILE))?;
        write_yield_csv(&report.yields, &out.join(YIELD_CSV_FILE))?;
        report.manifest = Some(manifest);
    }
    Ok(report)
}
