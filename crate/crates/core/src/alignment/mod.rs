//! The editable speech/text sync map.
//!
//! A [`SyncMap`] is built from a parsed subtitle document, has its
//! boundaries snapped to nearby silence, and is then hand-tuned through
//! [`Adjustment`]s before validation. Every operation returns a new map and
//! leaves its input untouched.

mod json;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{find_low_energy_point, AudioBuffer};
use crate::subtitle::{NormalizedText, SubtitleDocument, TimeMs};

pub use json::{load_sync_map, save_sync_map, SYNC_MAP_VERSION};

/// Largest nudge a single adjustment may carry.
pub const MAX_ADJUSTMENT_MS: i64 = 5000;

/// Default search radius for [`snap_boundaries`].
pub const DEFAULT_SNAP_WINDOW_MS: u64 = 250;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlignmentError {
    #[error("document has no entries with speech text")]
    EmptyDocument,
    #[error("no entry with id {0}")]
    UnknownEntry(u32),
    #[error("entry {entry_id}: {invariant}")]
    InvariantViolation { entry_id: u32, invariant: Invariant },
    #[error("schema error at {pointer}: {message}")]
    SchemaError { pointer: String, message: String },
}

/// The sync map rule an edit would break.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Invariant {
    BeginBeforeEnd,
    SortedByBegin,
    NoOverlap,
    NonNegativeTime,
    AdjustmentBound,
    StatusTransition,
}

impl fmt::Display for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Invariant::BeginBeforeEnd => "begin must be before end",
            Invariant::SortedByBegin => "entries must be sorted by begin",
            Invariant::NoOverlap => "entry overlaps the previous entry",
            Invariant::NonNegativeTime => "time would become negative",
            Invariant::AdjustmentBound => "adjustment exceeds 5000 ms",
            Invariant::StatusTransition => "status change not allowed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryStatus {
    Pending,
    Accepted,
    Rejected,
}

impl EntryStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            EntryStatus::Pending => "pending",
            EntryStatus::Accepted => "accepted",
            EntryStatus::Rejected => "rejected",
        }
    }
}

/// Where an entry's current timing came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Subtitle,
    Snapped,
    Manual,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Subtitle => "subtitle",
            Origin::Snapped => "snapped",
            Origin::Manual => "manual",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncEntry {
    /// Index of the subtitle cue this entry came from.
    pub id: u32,
    #[serde(rename = "begin_ms")]
    pub begin: TimeMs,
    #[serde(rename = "end_ms")]
    pub end: TimeMs,
    pub text: String,
    pub status: EntryStatus,
    pub origin: Origin,
}

impl SyncEntry {
    pub fn duration_ms(&self) -> u64 {
        self.end.0.saturating_sub(self.begin.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncMap {
    pub source_id: String,
    /// Path of the audio file, relative to the sync map file.
    pub audio_ref: String,
    pub entries: Vec<SyncEntry>,
}

/// A manual edit from the tuning interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Adjustment {
    pub entry_id: u32,
    pub delta_begin_ms: i64,
    pub delta_end_ms: i64,
    pub reject: bool,
}

impl SyncMap {
    /// Checks ordering, non-overlap and `begin < end`.
    pub fn validate(&self) -> Result<(), AlignmentError> {
        let violation = |entry_id, invariant| AlignmentError::InvariantViolation { entry_id, invariant };
        for (i, e) in self.entries.iter().enumerate() {
            if e.begin >= e.end {
                return Err(violation(e.id, Invariant::BeginBeforeEnd));
            }
            if i > 0 {
                let prev = &self.entries[i - 1];
                if e.begin < prev.begin {
                    return Err(violation(e.id, Invariant::SortedByBegin));
                }
                if prev.end > e.begin {
                    return Err(violation(e.id, Invariant::NoOverlap));
                }
            }
        }
        Ok(())
    }

    pub fn entry(&self, id: u32) -> Option<&SyncEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn count_with_status(&self, status: EntryStatus) -> usize {
        self.entries.iter().filter(|e| e.status == status).count()
    }

    /// Drops entries that start at or after `duration` and trims the last
    /// one that runs past it. Returns the new map and how many entries
    /// changed.
    pub fn clip_to(&self, duration: TimeMs) -> (SyncMap, usize) {
        let mut changed = 0;
        let entries = self
            .entries
            .iter()
            .filter_map(|e| {
                if e.begin >= duration {
                    changed += 1;
                    None
                } else if e.end > duration {
                    changed += 1;
                    Some(SyncEntry {
                        end: duration,
                        ..e.clone()
                    })
                } else {
                    Some(e.clone())
                }
            })
            .collect();
        (
            SyncMap {
                entries,
                ..self.clone_header()
            },
            changed,
        )
    }

    fn clone_header(&self) -> SyncMap {
        SyncMap {
            source_id: self.source_id.clone(),
            audio_ref: self.audio_ref.clone(),
            entries: Vec::new(),
        }
    }
}

/// Builds a sync map with one pending entry per subtitle segment.
///
/// Segment text goes through `normalize`; segments left without text are
/// dropped. Where neighbours overlap, both move to the midpoint of the
/// overlap. An entry that the midpoint would collapse (a cue nested inside
/// its predecessor) is squeezed to keep at least 1 ms, or dropped if even
/// that is impossible.
pub fn build_sync_map<F>(
    doc: &SubtitleDocument,
    audio_ref: &str,
    normalize: F,
) -> Result<SyncMap, AlignmentError>
where
    F: Fn(&str) -> NormalizedText,
{
    let mut entries: Vec<SyncEntry> = doc
        .segments
        .iter()
        .filter_map(|seg| {
            let text = normalize(&seg.raw_text).text;
            (!text.is_empty()).then(|| SyncEntry {
                id: seg.index,
                begin: seg.start,
                end: seg.end,
                text,
                status: EntryStatus::Pending,
                origin: Origin::Subtitle,
            })
        })
        .collect();
    if entries.is_empty() {
        return Err(AlignmentError::EmptyDocument);
    }
    entries.sort_by_key(|e| e.begin);

    let mut resolved: Vec<SyncEntry> = Vec::with_capacity(entries.len());
    for mut next in entries {
        if let Some(prev) = resolved.last_mut() {
            if prev.end > next.begin {
                // Bounds keep both entries at least 1 ms long.
                let lo = prev.begin.0 + 1;
                let hi = next.end.0.saturating_sub(1);
                if lo > hi {
                    log::warn!("dropping entry {} nested inside entry {}", next.id, prev.id);
                    continue;
                }
                let mid = ((next.begin.0 + prev.end.0) / 2).clamp(lo, hi);
                prev.end = TimeMs(mid);
                next.begin = TimeMs(mid);
            }
        }
        resolved.push(next);
    }

    Ok(SyncMap {
        source_id: doc.source_id.clone(),
        audio_ref: audio_ref.to_string(),
        entries: resolved,
    })
}

/// Moves every boundary to the quietest nearby point in `audio`.
///
/// A window of 0 leaves the map unchanged. If snapping would make an entry
/// empty it keeps its original timing; if two neighbours would cross, the
/// shared boundary is taken from one of them, falling back to the original
/// boundaries. No boundary ends up farther than `window_ms` plus half a
/// frame from where it started.
pub fn snap_boundaries(map: &SyncMap, audio: &AudioBuffer, window_ms: u64) -> SyncMap {
    if window_ms == 0 || map.entries.is_empty() {
        return map.clone();
    }
    let original: Vec<(u64, u64)> = map.entries.iter().map(|e| (e.begin.0, e.end.0)).collect();
    let mut bounds: Vec<(u64, u64)> = original
        .iter()
        .map(|&(b, e)| {
            let sb = find_low_energy_point(audio, TimeMs(b), window_ms).0;
            let se = find_low_energy_point(audio, TimeMs(e), window_ms).0;
            if sb < se {
                (sb, se)
            } else {
                (b, e)
            }
        })
        .collect();

    // Repair crossings: share one of the two snapped values, or revert both
    // entries. Originals never overlap, so reverting everything is the
    // last resort.
    let mut passes = 0;
    loop {
        passes += 1;
        if passes > 2 * bounds.len() + 2 {
            bounds.clone_from(&original);
            break;
        }
        let mut changed = false;
        for i in 0..bounds.len().saturating_sub(1) {
            let (b0, e0) = bounds[i];
            let (b1, e1) = bounds[i + 1];
            if e0 <= b1 {
                continue;
            }
            changed = true;
            if b0 < b1 {
                bounds[i].1 = b1;
            } else if e0 < e1 {
                bounds[i + 1].0 = e0;
            } else {
                bounds[i] = original[i];
                bounds[i + 1] = original[i + 1];
            }
        }
        if !changed {
            break;
        }
    }

    let entries = map
        .entries
        .iter()
        .zip(&bounds)
        .map(|(e, &(b, end))| {
            let moved = b != e.begin.0 || end != e.end.0;
            SyncEntry {
                begin: TimeMs(b),
                end: TimeMs(end),
                origin: if moved { Origin::Snapped } else { e.origin },
                ..e.clone()
            }
        })
        .collect();
    SyncMap {
        entries,
        ..map.clone_header()
    }
}

/// Applies one manual edit, refusing it if the result would break an
/// invariant.
pub fn apply_adjustment(map: &SyncMap, adj: &Adjustment) -> Result<SyncMap, AlignmentError> {
    let violation = |invariant| AlignmentError::InvariantViolation {
        entry_id: adj.entry_id,
        invariant,
    };
    let pos = map
        .entries
        .iter()
        .position(|e| e.id == adj.entry_id)
        .ok_or(AlignmentError::UnknownEntry(adj.entry_id))?;
    if adj.delta_begin_ms.abs() > MAX_ADJUSTMENT_MS || adj.delta_end_ms.abs() > MAX_ADJUSTMENT_MS {
        return Err(violation(Invariant::AdjustmentBound));
    }

    let entry = &map.entries[pos];
    let shift = |t: TimeMs, d: i64| -> Result<TimeMs, AlignmentError> {
        let v = t.0 as i64 + d;
        if v < 0 {
            Err(violation(Invariant::NonNegativeTime))
        } else {
            Ok(TimeMs(v as u64))
        }
    };
    let begin = shift(entry.begin, adj.delta_begin_ms)?;
    let end = shift(entry.end, adj.delta_end_ms)?;
    let moved = adj.delta_begin_ms != 0 || adj.delta_end_ms != 0;

    let mut out = map.clone();
    let e = &mut out.entries[pos];
    e.begin = begin;
    e.end = end;
    if moved {
        e.origin = Origin::Manual;
    }
    if adj.reject {
        e.status = EntryStatus::Rejected;
    }
    out.validate().map_err(|err| match err {
        AlignmentError::InvariantViolation { invariant, .. } => violation(invariant),
        other => other,
    })?;
    Ok(out)
}

/// Applies edits in order, stopping at the first one that is refused.
pub fn apply_adjustments(map: &SyncMap, adjustments: &[Adjustment]) -> Result<SyncMap, AlignmentError> {
    adjustments
        .iter()
        .try_fold(map.clone(), |m, adj| apply_adjustment(&m, adj))
}
