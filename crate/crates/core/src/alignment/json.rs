//! Canonical JSON form of a sync map.
//!
//! ```json
//! {"version": 1, "source_id": "...", "audio_ref": "...",
//!  "entries": [{"id": 1, "begin_ms": 0, "end_ms": 10, "text": "...",
//!               "status": "pending", "origin": "subtitle"}]}
//! ```
//!
//! Keys are written in exactly this order. Loading is strict: unknown keys,
//! missing keys and wrong types are reported with a JSON pointer to the
//! offending value.

use serde::Serialize;
use serde_json::{Map, Value};

use super::{AlignmentError, EntryStatus, Origin, SyncEntry, SyncMap};
use crate::subtitle::TimeMs;

pub const SYNC_MAP_VERSION: u64 = 1;

#[derive(Serialize)]
struct SyncMapOut<'a> {
    version: u64,
    source_id: &'a str,
    audio_ref: &'a str,
    entries: &'a [SyncEntry],
}

/// Serializes `map` as pretty-printed canonical JSON with a trailing newline.
pub fn save_sync_map(map: &SyncMap) -> Vec<u8> {
    let out = SyncMapOut {
        version: SYNC_MAP_VERSION,
        source_id: &map.source_id,
        audio_ref: &map.audio_ref,
        entries: &map.entries,
    };
    let mut bytes = serde_json::to_vec_pretty(&out).expect("sync map serializes");
    bytes.push(b'\n');
    bytes
}

fn schema(pointer: impl Into<String>, message: impl Into<String>) -> AlignmentError {
    AlignmentError::SchemaError {
        pointer: pointer.into(),
        message: message.into(),
    }
}

fn object<'a>(v: &'a Value, at: &str, keys: &[&str]) -> Result<&'a Map<String, Value>, AlignmentError> {
    let obj = v
        .as_object()
        .ok_or_else(|| schema(if at.is_empty() { "/" } else { at }, "expected an object"))?;
    if let Some(extra) = obj.keys().find(|k| !keys.contains(&k.as_str())) {
        return Err(schema(format!("{at}/{extra}"), "unknown key"));
    }
    Ok(obj)
}

fn field<'a>(obj: &'a Map<String, Value>, at: &str, key: &str) -> Result<&'a Value, AlignmentError> {
    obj.get(key)
        .ok_or_else(|| schema(format!("{at}/{key}"), "missing key"))
}

fn string(obj: &Map<String, Value>, at: &str, key: &str) -> Result<String, AlignmentError> {
    field(obj, at, key)?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| schema(format!("{at}/{key}"), "expected a string"))
}

fn uint(obj: &Map<String, Value>, at: &str, key: &str) -> Result<u64, AlignmentError> {
    field(obj, at, key)?
        .as_u64()
        .ok_or_else(|| schema(format!("{at}/{key}"), "expected a non-negative integer"))
}

/// Parses and validates a sync map. Schema problems come back as
/// `SchemaError`; a well-formed map that breaks ordering rules comes back
/// as `InvariantViolation`.
pub fn load_sync_map(bytes: &[u8]) -> Result<SyncMap, AlignmentError> {
    let root: Value = serde_json::from_slice(bytes).map_err(|e| schema("", e.to_string()))?;
    let top = object(&root, "", &["version", "source_id", "audio_ref", "entries"])?;
    let version = uint(top, "", "version")?;
    if version != SYNC_MAP_VERSION {
        return Err(schema("/version", format!("unsupported version {version}")));
    }
    let source_id = string(top, "", "source_id")?;
    let audio_ref = string(top, "", "audio_ref")?;
    let raw_entries = field(top, "", "entries")?
        .as_array()
        .ok_or_else(|| schema("/entries", "expected an array"))?;

    let mut entries = Vec::with_capacity(raw_entries.len());
    for (i, v) in raw_entries.iter().enumerate() {
        let at = format!("/entries/{i}");
        let e = object(v, &at, &["id", "begin_ms", "end_ms", "text", "status", "origin"])?;
        let id = u32::try_from(uint(e, &at, "id")?)
            .map_err(|_| schema(format!("{at}/id"), "id out of range"))?;
        let status = match string(e, &at, "status")?.as_str() {
            "pending" => EntryStatus::Pending,
            "accepted" => EntryStatus::Accepted,
            "rejected" => EntryStatus::Rejected,
            other => return Err(schema(format!("{at}/status"), format!("unknown status {other:?}"))),
        };
        let origin = match string(e, &at, "origin")?.as_str() {
            "subtitle" => Origin::Subtitle,
            "snapped" => Origin::Snapped,
            "manual" => Origin::Manual,
            other => return Err(schema(format!("{at}/origin"), format!("unknown origin {other:?}"))),
        };
        entries.push(SyncEntry {
            id,
            begin: TimeMs(uint(e, &at, "begin_ms")?),
            end: TimeMs(uint(e, &at, "end_ms")?),
            text: string(e, &at, "text")?,
            status,
            origin,
        });
    }
    let map = SyncMap {
        source_id,
        audio_ref,
        entries,
    };
    map.validate()?;
    Ok(map)
}
