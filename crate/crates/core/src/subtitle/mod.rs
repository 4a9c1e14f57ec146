//! SubRip subtitle parsing, serialization and text normalization.

mod normalize;
mod srt;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use normalize::{is_removed_punctuation, normalize_text, NormalizedText};
pub use srt::{parse_srt, serialize_srt, CueProblem, ParseWarning, ParsedSrt};

/// Largest timestamp the `HH:MM:SS,mmm` form can carry (99:59:59,999).
pub const MAX_TIMESTAMP_MS: u64 = 359_999_999;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SubtitleError {
    #[error("malformed timestamp {0:?}")]
    MalformedTimestamp(String),
    #[error("timestamp {0} ms exceeds 99:59:59,999")]
    Overflow(u64),
    #[error("subtitle input is not valid UTF-8 (byte offset {offset})")]
    EncodingError { offset: usize },
    #[error("no cue could be parsed ({warnings} cues rejected)")]
    FatalFormat { warnings: usize },
    #[error("invalid segment {index}: {reason}")]
    InvalidSegment { index: u32, reason: &'static str },
}

/// A point in time measured in whole milliseconds from the start of a stream.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct TimeMs(pub u64);

impl TimeMs {
    pub const ZERO: TimeMs = TimeMs(0);

    pub fn as_u64(self) -> u64 {
        self.0
    }
}

impl From<u64> for TimeMs {
    fn from(v: u64) -> Self {
        TimeMs(v)
    }
}

impl fmt::Display for TimeMs {
    /// Writes the SubRip form; values beyond 99 hours widen the hour field.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = self.0;
        write!(
            f,
            "{:02}:{:02}:{:02},{:03}",
            t / 3_600_000,
            (t / 60_000) % 60,
            (t / 1000) % 60,
            t % 1000
        )
    }
}

/// Parses `HH:MM:SS,mmm` (exactly 2/2/2/3 digits, minutes and seconds < 60).
pub fn parse_timestamp(s: &str) -> Result<TimeMs, SubtitleError> {
    let malformed = || SubtitleError::MalformedTimestamp(s.to_string());
    let b = s.as_bytes();
    if b.len() != 12 || b[2] != b':' || b[5] != b':' || b[8] != b',' {
        return Err(malformed());
    }
    let field = |range: std::ops::Range<usize>| -> Result<u64, SubtitleError> {
        b[range].iter().try_fold(0u64, |acc, &c| {
            if c.is_ascii_digit() {
                Ok(acc * 10 + u64::from(c - b'0'))
            } else {
                Err(malformed())
            }
        })
    };
    let (h, m, sec, ms) = (field(0..2)?, field(3..5)?, field(6..8)?, field(9..12)?);
    if m >= 60 || sec >= 60 {
        return Err(malformed());
    }
    Ok(TimeMs(h * 3_600_000 + m * 60_000 + sec * 1000 + ms))
}

/// Formats a timestamp in canonical `HH:MM:SS,mmm` form.
pub fn format_timestamp(t: TimeMs) -> Result<String, SubtitleError> {
    if t.0 > MAX_TIMESTAMP_MS {
        return Err(SubtitleError::Overflow(t.0));
    }
    Ok(t.to_string())
}

/// One numbered, timed block of a SubRip file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtitleSegment {
    pub index: u32,
    pub start: TimeMs,
    pub end: TimeMs,
    /// Cue text; multi-line cues are joined with a single space.
    pub raw_text: String,
}

impl SubtitleSegment {
    /// Builds a segment, checking the invariants the serializer relies on.
    pub fn new(
        index: u32,
        start: TimeMs,
        end: TimeMs,
        raw_text: impl Into<String>,
    ) -> Result<Self, SubtitleError> {
        let seg = SubtitleSegment {
            index,
            start,
            end,
            raw_text: raw_text.into(),
        };
        seg.check()?;
        Ok(seg)
    }

    pub fn check(&self) -> Result<(), SubtitleError> {
        let invalid = |reason| SubtitleError::InvalidSegment {
            index: self.index,
            reason,
        };
        if self.index == 0 {
            return Err(invalid("index must be positive"));
        }
        if self.start >= self.end {
            return Err(invalid("start must precede end"));
        }
        if self.end.0 > MAX_TIMESTAMP_MS {
            return Err(invalid("end exceeds 99:59:59,999"));
        }
        let trimmed = self.raw_text.trim();
        if trimmed.is_empty() {
            return Err(invalid("text is empty"));
        }
        if trimmed.len() != self.raw_text.len() || self.raw_text.contains(['\n', '\r']) {
            return Err(invalid("text must be a single trimmed line"));
        }
        Ok(())
    }

    pub fn duration_ms(&self) -> u64 {
        self.end.0 - self.start.0
    }
}

/// The parsed cues of one subtitle file, ordered by start time.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SubtitleDocument {
    pub source_id: String,
    pub segments: Vec<SubtitleSegment>,
}

impl SubtitleDocument {
    pub fn new(source_id: impl Into<String>, mut segments: Vec<SubtitleSegment>) -> Self {
        segments.sort_by_key(|s| s.start);
        SubtitleDocument {
            source_id: source_id.into(),
            segments,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }
}
