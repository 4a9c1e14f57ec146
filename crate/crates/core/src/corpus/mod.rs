//! Writes accepted fragments to disk and reports how much of each source
//! made it into the corpus.

mod manifest;
mod stats;

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{EntryStatus, SyncMap};
use crate::audio::{write_wav, AudioBuffer, AudioError};
use crate::fsutil::write_atomic;

pub use manifest::{load_manifest, tsv_path, write_manifest, CorpusManifest};
pub use stats::{
    aggregate_stats, compute_yield, format_duration, format_duration_precise, format_yield_table,
    load_table_fixture, parse_duration, write_yield_csv, FixtureRow, SegmentStats, TableFixture,
    YieldReport, YieldSummary,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("duplicate fragment id {0}")]
    DuplicateFragmentId(String),
    #[error("manifest schema error: {0}")]
    SchemaError(String),
    #[error("source {0} has zero duration")]
    ZeroSourceDuration(String),
    #[error("inconsistent statistics for {source_id}: {reason}")]
    InvalidStats { source_id: String, reason: String },
    #[error("no yield reports to aggregate")]
    EmptyInput,
    #[error("statistics table: {0}")]
    Fixture(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FragmentRecord {
    pub fragment_id: String,
    /// Relative to the corpus root, always with `/` separators.
    pub audio_path: String,
    pub text: String,
    pub duration_ms: u64,
}

pub fn fragment_id(source_id: &str, entry_id: u32) -> String {
    format!("{source_id}-{entry_id:04}")
}

/// Writes `<out_dir>/<source_id>/<fragment_id>.wav` and `.txt` for every
/// accepted entry and returns their records in map order.
///
/// Fragment files left over from earlier runs that are no longer accepted
/// are removed, so the directory always matches the returned records.
pub fn emit_fragments(map: &SyncMap, audio: &AudioBuffer, out_dir: &Path) -> Result<Vec<FragmentRecord>, CorpusError> {
    let dir = out_dir.join(&map.source_id);
    fs::create_dir_all(&dir)?;

    let accepted: Vec<_> = map
        .entries
        .iter()
        .filter(|e| e.status == EntryStatus::Accepted)
        .collect();
    let mut seen = BTreeSet::new();
    for e in &accepted {
        let id = fragment_id(&map.source_id, e.id);
        if !seen.insert(id.clone()) {
            return Err(CorpusError::DuplicateFragmentId(id));
        }
    }

    let records = accepted
        .par_iter()
        .map(|e| -> Result<FragmentRecord, CorpusError> {
            let id = fragment_id(&map.source_id, e.id);
            let slice = audio.slice_ms(e.begin, e.end)?;
            write_wav(&slice, &dir.join(format!("{id}.wav")))?;
            write_atomic(&dir.join(format!("{id}.txt")), format!("{}\n", e.text).as_bytes())?;
            Ok(FragmentRecord {
                audio_path: format!("{}/{id}.wav", map.source_id),
                fragment_id: id,
                text: e.text.clone(),
                duration_ms: slice.duration_ms(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    for item in fs::read_dir(&dir)? {
        let path = item?.path();
        let stale = matches!(path.extension().and_then(|x| x.to_str()), Some("wav" | "txt"))
            && path
                .file_stem()
                .and_then(|s| s.to_str())
                .is_some_and(|s| !seen.contains(s));
        if stale {
            fs::remove_file(&path)?;
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::{Origin, SyncEntry};
    use crate::audio::read_wav;
    use crate::subtitle::TimeMs;

    fn entry(id: u32, begin: u64, end: u64, status: EntryStatus) -> SyncEntry {
        SyncEntry {
            id,
            begin: TimeMs(begin),
            end: TimeMs(end),
            text: format!("문장 {id}"),
            status,
            origin: Origin::Subtitle,
        }
    }

    fn map(source: &str, entries: Vec<SyncEntry>) -> SyncMap {
        SyncMap {
            source_id: source.into(),
            audio_ref: "a.wav".into(),
            entries,
        }
    }

    #[test]
    fn id_format() {
        assert_eq!(fragment_id("tedxkr01", 7), "tedxkr01-0007");
        assert_eq!(fragment_id("s", 12345), "s-12345");
    }

    #[test]
    fn nothing_accepted_still_creates_dir() {
        let tmp = tempfile::tempdir().unwrap();
        let audio = AudioBuffer::new(16000, vec![0; 16000]).unwrap();
        let m = map("empty", vec![entry(1, 0, 500, EntryStatus::Rejected), entry(2, 500, 900, EntryStatus::Pending)]);
        assert!(emit_fragments(&m, &audio, tmp.path()).unwrap().is_empty());
        assert!(tmp.path().join("empty").is_dir());
    }

    #[test]
    fn sample_cue_slice_written() {
        let tmp = tempfile::tempdir().unwrap();
        let audio = AudioBuffer::new(16000, (0..16000 * 21).map(|i| (i % 300) as i16).collect()).unwrap();
        let m = map("tedxkr01", vec![entry(1, 15761, 17129, EntryStatus::Accepted)]);
        let recs = emit_fragments(&m, &audio, tmp.path()).unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!(r.fragment_id, "tedxkr01-0001");
        assert_eq!(r.audio_path, "tedxkr01/tedxkr01-0001.wav");
        let back = read_wav(&tmp.path().join(&r.audio_path)).unwrap();
        assert_eq!(back.len(), 21888);
        assert_eq!(back.duration_ms(), r.duration_ms);
        assert_eq!(
            fs::read_to_string(tmp.path().join("tedxkr01/tedxkr01-0001.txt")).unwrap(),
            "문장 1\n"
        );
    }

    #[test]
    fn skips_unaccepted_and_prunes_stale_files() {
        let tmp = tempfile::tempdir().unwrap();
        let audio = AudioBuffer::new(16000, vec![7; 16000 * 3]).unwrap();
        let mut m = map(
            "s",
            vec![
                entry(1, 0, 900, EntryStatus::Accepted),
                entry(2, 1000, 1900, EntryStatus::Rejected),
                entry(3, 2000, 2900, EntryStatus::Accepted),
            ],
        );
        let ids: Vec<_> = emit_fragments(&m, &audio, tmp.path()).unwrap().into_iter().map(|r| r.fragment_id).collect();
        assert_eq!(ids, ["s-0001", "s-0003"]);

        m.entries[0].status = EntryStatus::Rejected;
        fs::write(tmp.path().join("s/notes.md"), "keep").unwrap();
        emit_fragments(&m, &audio, tmp.path()).unwrap();
        let mut left: Vec<_> = fs::read_dir(tmp.path().join("s"))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        left.sort();
        assert_eq!(left, ["notes.md", "s-0003.txt", "s-0003.wav"]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let audio = AudioBuffer::new(16000, vec![0; 16000 * 2]).unwrap();
        let m = map("d", vec![entry(4, 0, 500, EntryStatus::Accepted), entry(4, 600, 900, EntryStatus::Accepted)]);
        assert!(matches!(
            emit_fragments(&m, &audio, tmp.path()),
            Err(CorpusError::DuplicateFragmentId(id)) if id == "d-0004"
        ));
    }

    #[test]
    fn out_of_range_entry_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        let audio = AudioBuffer::new(16000, vec![0; 1600]).unwrap();
        let m = map("o", vec![entry(1, 0, 500, EntryStatus::Accepted)]);
        assert!(matches!(emit_fragments(&m, &audio, tmp.path()), Err(CorpusError::Audio(_))));
    }
}
