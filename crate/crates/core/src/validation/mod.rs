//! Filters candidate fragments by transcribing them with an ASR backend and
//! scoring the transcript against the subtitle text by character error rate.

mod backend;
mod cer;
mod http;
mod mock;

use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{EntryStatus, SyncEntry, SyncMap};
use crate::audio::{AudioBuffer, AudioError};
use crate::subtitle::normalize_text;

pub use backend::{
    transcribe, AsrBackend, BackendError, Capabilities, Recognition, RetryPolicy, TranscriptionResult,
};
pub use cer::{char_error_rate, levenshtein};
pub use http::{parse_recognize_response, recognize_request, HttpBackend};
pub use mock::{audio_fingerprint, MockBackend};

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("reference text is empty but the hypothesis is not")]
    EmptyReference,
    #[error("entry {0} is not pending")]
    NotPending(u32),
    #[error("invalid validation settings: {0}")]
    Config(String),
    #[error("cannot load mock table: {0}")]
    MockTable(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("validation aborted")]
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationPolicy {
    /// Highest character error rate still accepted.
    pub cer_threshold: f64,
    pub min_duration_ms: u64,
    pub max_duration_ms: u64,
    pub language_code: String,
}

impl Default for ValidationPolicy {
    fn default() -> Self {
        ValidationPolicy {
            cer_threshold: 0.25,
            min_duration_ms: 500,
            max_duration_ms: 30_000,
            language_code: "ko-KR".to_string(),
        }
    }
}

impl ValidationPolicy {
    pub fn check(&self) -> Result<(), ValidationError> {
        if !(0.0..=1.0).contains(&self.cer_threshold) {
            return Err(ValidationError::Config(format!(
                "cer_threshold {} is outside [0, 1]",
                self.cer_threshold
            )));
        }
        if self.min_duration_ms >= self.max_duration_ms {
            return Err(ValidationError::Config(format!(
                "min_duration_ms {} must be below max_duration_ms {}",
                self.min_duration_ms, self.max_duration_ms
            )));
        }
        if self.language_code.trim().is_empty() {
            return Err(ValidationError::Config("language_code is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Ok,
    CerExceeded,
    TooShort,
    TooLong,
    EmptyReference,
    BackendError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub entry_id: u32,
    /// Normalized transcript; empty when the backend was not consulted.
    pub hypothesis: String,
    /// `None` when no transcript was scored.
    pub cer: Option<f64>,
    pub accepted: bool,
    pub reason: Reason,
}

impl ValidationRecord {
    fn refused(entry_id: u32, reason: Reason) -> Self {
        ValidationRecord {
            entry_id,
            hypothesis: String::new(),
            cer: None,
            accepted: false,
            reason,
        }
    }
}

/// Scores one candidate fragment.
///
/// Duration gates run first and never reach the backend. Backend failures
/// become a `backend_error` record, except authentication failures, which
/// are returned as errors because no later call can succeed either.
pub fn validate_segment(
    entry: &SyncEntry,
    audio_slice: &AudioBuffer,
    backend: &dyn AsrBackend,
    policy: &ValidationPolicy,
    retry: &RetryPolicy,
) -> Result<ValidationRecord, ValidationError> {
    if entry.status != EntryStatus::Pending {
        return Err(ValidationError::NotPending(entry.id));
    }
    let duration = entry.duration_ms();
    if duration < policy.min_duration_ms {
        return Ok(ValidationRecord::refused(entry.id, Reason::TooShort));
    }
    if duration > policy.max_duration_ms {
        return Ok(ValidationRecord::refused(entry.id, Reason::TooLong));
    }
    let reference = normalize_text(&entry.text).text;
    if reference.is_empty() {
        return Ok(ValidationRecord::refused(entry.id, Reason::EmptyReference));
    }

    let result = match transcribe(backend, audio_slice, &policy.language_code, retry) {
        Ok(r) => r,
        Err(e @ BackendError::Auth(_)) => return Err(e.into()),
        Err(e) => {
            log::warn!("entry {}: {e}", entry.id);
            return Ok(ValidationRecord::refused(entry.id, Reason::BackendError));
        }
    };
    let hypothesis = normalize_text(&result.hypothesis).text;
    let cer = char_error_rate(&reference, &hypothesis)?;
    let accepted = cer <= policy.cer_threshold;
    Ok(ValidationRecord {
        entry_id: entry.id,
        hypothesis,
        cer: Some(cer),
        accepted,
        reason: if accepted { Reason::Ok } else { Reason::CerExceeded },
    })
}

/// Validates every pending entry of `map`.
///
/// Up to `parallelism` backend calls run at once; records come back in
/// entry order regardless. Accepted and rejected entries get their new
/// status. Entries whose backend call failed stay pending so a later run
/// can retry them. The whole run stops on an authentication failure.
pub fn validate_map(
    map: &SyncMap,
    audio: &AudioBuffer,
    backend: &dyn AsrBackend,
    policy: &ValidationPolicy,
    retry: &RetryPolicy,
    parallelism: usize,
) -> Result<(SyncMap, Vec<ValidationRecord>), ValidationError> {
    policy.check()?;
    let pending: Vec<usize> = (0..map.entries.len())
        .filter(|&i| map.entries[i].status == EntryStatus::Pending)
        .collect();
    let abort = AtomicBool::new(false);

    let run_one = |&i: &usize| -> Result<ValidationRecord, ValidationError> {
        if abort.load(Ordering::SeqCst) {
            return Err(ValidationError::Aborted);
        }
        let entry = &map.entries[i];
        let slice = audio.slice_ms(entry.begin, entry.end)?;
        let res = validate_segment(entry, &slice, backend, policy, retry);
        if res.is_err() {
            abort.store(true, Ordering::SeqCst);
        }
        res
    };

    let results: Vec<Result<ValidationRecord, ValidationError>> = if parallelism <= 1 {
        pending.iter().map(run_one).collect()
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| ValidationError::Config(e.to_string()))?;
        pool.install(|| pending.par_iter().map(run_one).collect())
    };

    // Report the first real failure, not a task that merely saw the abort flag.
    let mut records = Vec::with_capacity(results.len());
    let mut first_err = None;
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(ValidationError::Aborted) => {}
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }

    let mut out = map.clone();
    for (&i, rec) in pending.iter().zip(&records) {
        out.entries[i].status = match (rec.accepted, rec.reason) {
            (true, _) => EntryStatus::Accepted,
            (false, Reason::BackendError) => EntryStatus::Pending,
            (false, _) => EntryStatus::Rejected,
        };
    }
    Ok((out, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::Origin;
    use crate::subtitle::TimeMs;
    use std::collections::BTreeMap;
    use std::sync::atomic::AtomicUsize;
    use std::time::Duration;

    fn entry(id: u32, begin: u64, end: u64, text: &str) -> SyncEntry {
        SyncEntry {
            id,
            begin: TimeMs(begin),
            end: TimeMs(end),
            text: text.into(),
            status: EntryStatus::Pending,
            origin: Origin::Subtitle,
        }
    }

    /// Audio where each 1 s block holds a distinct constant value, so every
    /// entry slice has its own fingerprint.
    fn blocks(n: u64) -> AudioBuffer {
        AudioBuffer::new(16000, (0..n * 16000).map(|i| (i / 16000 + 1) as i16 * 100).collect()).unwrap()
    }

    fn map_of(entries: Vec<SyncEntry>) -> SyncMap {
        SyncMap {
            source_id: "s".into(),
            audio_ref: "a.wav".into(),
            entries,
        }
    }

    fn quick() -> RetryPolicy {
        RetryPolicy {
            base_delay: Duration::from_millis(1),
            ..RetryPolicy::default()
        }
    }

    /// Ten one-second entries; entries 3, 6 and 9 get transcripts that miss
    /// the threshold.
    fn ten_entry_fixture() -> (SyncMap, AudioBuffer, MockBackend) {
        let audio = blocks(10);
        let texts = [
            "하나 둘 셋", "오늘 제가 얘기할 주제는요", "예술가가 되자", "지금 당장", "입니다",
            "감사합니다", "여러분 안녕하세요", "좋은 하루", "다시 만나요", "끝",
        ];
        let entries: Vec<SyncEntry> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| entry(i as u32 + 1, i as u64 * 1000 + 100, i as u64 * 1000 + 900, t))
            .collect();
        let mut table = BTreeMap::new();
        for e in &entries {
            let fp = audio_fingerprint(&audio.slice_ms(e.begin, e.end).unwrap());
            let hyp = if e.id % 3 == 0 { "전혀 다른 문장이 인식되었음".to_string() } else { format!("{}.", e.text) };
            table.insert(fp, hyp);
        }
        (map_of(entries), audio, MockBackend::new(table))
    }

    #[test]
    fn short_segment_gated_without_call() {
        let mock = MockBackend::default();
        let e = entry(1, 0, 300, "짧다");
        let rec = validate_segment(&e, &blocks(1).slice_ms(e.begin, e.end).unwrap(), &mock, &ValidationPolicy::default(), &quick()).unwrap();
        assert_eq!(rec.reason, Reason::TooShort);
        assert!(!rec.accepted);
        assert_eq!(mock.calls(), 0);

        let long = entry(2, 0, 30_001, "길다");
        let rec = validate_segment(&long, &blocks(1), &mock, &ValidationPolicy::default(), &quick()).unwrap();
        assert_eq!(rec.reason, Reason::TooLong);
        assert_eq!(mock.calls(), 0);
    }

    #[test]
    fn exact_match_accepted_after_renormalization() {
        let audio = blocks(1);
        let e = entry(1, 0, 1000, "예술가가 되자 지금 당장 입니다");
        let mut table = BTreeMap::new();
        table.insert(audio_fingerprint(&audio), "예술가가 되자. 지금 당장! 입니다.".to_string());
        let rec = validate_segment(&e, &audio, &MockBackend::new(table), &ValidationPolicy::default(), &quick()).unwrap();
        assert_eq!(rec.cer, Some(0.0));
        assert!(rec.accepted);
        assert_eq!(rec.reason, Reason::Ok);
    }

    #[test]
    fn unknown_audio_scores_full_error() {
        let rec = validate_segment(&entry(1, 0, 1000, "가나"), &blocks(1), &MockBackend::default(), &ValidationPolicy::default(), &quick()).unwrap();
        assert_eq!(rec.cer, Some(1.0));
        assert_eq!(rec.reason, Reason::CerExceeded);
    }

    #[test]
    fn non_pending_entry_refused() {
        let mut e = entry(1, 0, 1000, "가");
        e.status = EntryStatus::Accepted;
        assert!(matches!(
            validate_segment(&e, &blocks(1), &MockBackend::default(), &ValidationPolicy::default(), &quick()),
            Err(ValidationError::NotPending(1))
        ));
    }

    #[test]
    fn seven_of_ten_accepted() {
        let (map, audio, mock) = ten_entry_fixture();
        let (out, records) = validate_map(&map, &audio, &mock, &ValidationPolicy::default(), &quick(), 1).unwrap();
        assert_eq!(records.len(), 10);
        assert_eq!(records.iter().filter(|r| r.accepted).count(), 7);
        assert_eq!(out.count_with_status(EntryStatus::Accepted), 7);
        assert_eq!(out.count_with_status(EntryStatus::Rejected), 3);
        assert!(records.iter().all(|r| r.accepted == (r.reason == Reason::Ok)));
    }

    #[test]
    fn parallel_matches_sequential() {
        let (map, audio, mock) = ten_entry_fixture();
        let policy = ValidationPolicy::default();
        let serial = validate_map(&map, &audio, &mock, &policy, &quick(), 1).unwrap();
        for n in [2, 4, 8] {
            assert_eq!(validate_map(&map, &audio, &mock, &policy, &quick(), n).unwrap(), serial);
        }
    }

    #[test]
    fn lowering_threshold_never_accepts_more() {
        let (map, audio, mock) = ten_entry_fixture();
        let mut prev: Option<Vec<bool>> = None;
        for t in [1.0, 0.8, 0.5, 0.25, 0.1, 0.0] {
            let policy = ValidationPolicy { cer_threshold: t, ..Default::default() };
            let (_, recs) = validate_map(&map, &audio, &mock, &policy, &quick(), 3).unwrap();
            let acc: Vec<bool> = recs.iter().map(|r| r.accepted).collect();
            if let Some(p) = &prev {
                assert!(acc.iter().zip(p).all(|(now, before)| !*now || *before));
            }
            prev = Some(acc);
        }
    }

    #[test]
    fn empty_map_and_non_pending_skipped() {
        let mock = MockBackend::default();
        let (out, recs) = validate_map(&map_of(vec![]), &blocks(1), &mock, &ValidationPolicy::default(), &quick(), 2).unwrap();
        assert!(recs.is_empty() && out.entries.is_empty());

        let (map, audio, mock) = ten_entry_fixture();
        let mut partly = map.clone();
        partly.entries[0].status = EntryStatus::Rejected;
        partly.entries[1].status = EntryStatus::Accepted;
        let (_, recs) = validate_map(&partly, &audio, &mock, &ValidationPolicy::default(), &quick(), 2).unwrap();
        assert_eq!(recs.len(), 8);
    }

    struct Flaky {
        calls: AtomicUsize,
        auth_on: Option<usize>,
    }

    impl AsrBackend for Flaky {
        fn id(&self) -> &str {
            "flaky"
        }
        fn capabilities(&self) -> Capabilities {
            Capabilities { sample_rates: vec![16000], max_duration_ms: 60_000 }
        }
        fn recognize(&self, _: &AudioBuffer, _: &str) -> Result<Recognition, BackendError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if Some(n) == self.auth_on {
                Err(BackendError::Auth("revoked".into()))
            } else {
                Err(BackendError::Status { status: 400, body: "bad".into() })
            }
        }
    }

    #[test]
    fn backend_errors_stay_pending_and_auth_aborts() {
        let (map, audio, _) = ten_entry_fixture();
        let flaky = Flaky { calls: AtomicUsize::new(0), auth_on: None };
        let (out, recs) = validate_map(&map, &audio, &flaky, &ValidationPolicy::default(), &quick(), 2).unwrap();
        assert!(recs.iter().all(|r| r.reason == Reason::BackendError && !r.accepted));
        assert_eq!(out.count_with_status(EntryStatus::Pending), 10);

        let auth = Flaky { calls: AtomicUsize::new(0), auth_on: Some(2) };
        let err = validate_map(&map, &audio, &auth, &ValidationPolicy::default(), &quick(), 1).unwrap_err();
        assert!(matches!(err, ValidationError::Backend(BackendError::Auth(_))));
        assert_eq!(auth.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn policy_checks() {
        assert!(ValidationPolicy::default().check().is_ok());
        assert!(ValidationPolicy { cer_threshold: 1.5, ..Default::default() }.check().is_err());
        assert!(ValidationPolicy { min_duration_ms: 30_000, ..Default::default() }.check().is_err());
    }
}
