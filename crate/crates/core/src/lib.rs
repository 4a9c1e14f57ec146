//! Core building blocks for turning (audio, subtitle) pairs into a validated
//! speech-recognition corpus.
//!
//! The stages mirror the pipeline: [`subtitle`] parses and normalizes SubRip
//! text, [`audio`] handles PCM WAV input/output and energy analysis,
//! [`alignment`] maintains the editable sync map, [`validation`] filters
//! fragments through an ASR backend by character error rate, and [`corpus`]
//! emits fragments and yield statistics.

pub mod alignment;
pub mod audio;
pub mod corpus;
pub mod fsutil;
pub mod subtitle;
pub mod validation;

pub use alignment::{Adjustment, EntryStatus, Origin, SyncEntry, SyncMap};
pub use audio::{AudioBuffer, EnergyTrack};
pub use corpus::{CorpusManifest, FragmentRecord, YieldReport};
pub use subtitle::{NormalizedText, SubtitleDocument, SubtitleSegment, TimeMs};
pub use validation::{AsrBackend, TranscriptionResult, ValidationPolicy, ValidationRecord};
