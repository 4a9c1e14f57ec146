use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CorpusError, FragmentRecord};
use crate::fsutil::write_atomic;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub corpus_name: String,
    pub license: String,
    pub fragments: Vec<FragmentRecord>,
    pub total_duration_ms: u64,
    pub fragment_count: usize,
}

impl CorpusManifest {
    /// Builds a manifest with totals computed from `fragments`.
    pub fn new(
        corpus_name: impl Into<String>,
        license: impl Into<String>,
        fragments: Vec<FragmentRecord>,
    ) -> Result<Self, CorpusError> {
        let m = CorpusManifest {
            corpus_name: corpus_name.into(),
            license: license.into(),
            total_duration_ms: fragments.iter().map(|f| f.duration_ms).sum(),
            fragment_count: fragments.len(),
            fragments,
        };
        m.check()?;
        Ok(m)
    }

    /// Totals match the fragments, ids are unique and texts non-empty.
    pub fn check(&self) -> Result<(), CorpusError> {
        let sum: u64 = self.fragments.iter().map(|f| f.duration_ms).sum();
        if sum != self.total_duration_ms {
            return Err(CorpusError::SchemaError(format!(
                "total_duration_ms is {} but fragments sum to {sum}",
                self.total_duration_ms
            )));
        }
        if self.fragments.len() != self.fragment_count {
            return Err(CorpusError::SchemaError(format!(
                "fragment_count is {} but there are {} fragments",
                self.fragment_count,
                self.fragments.len()
            )));
        }
        let mut ids = BTreeSet::new();
        for f in &self.fragments {
            if !ids.insert(f.fragment_id.as_str()) {
                return Err(CorpusError::DuplicateFragmentId(f.fragment_id.clone()));
            }
            if f.text.is_empty() {
                return Err(CorpusError::SchemaError(format!("fragment {} has empty text", f.fragment_id)));
            }
        }
        Ok(())
    }
}

/// The TSV written next to a manifest: same stem, `.tsv` extension.
pub fn tsv_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("tsv")
}

fn tsv_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn render_tsv(m: &CorpusManifest) -> String {
    let mut out = String::from("fragment_id\taudio_path\tduration_ms\ttext\n");
    for f in &m.fragments {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            tsv_field(&f.fragment_id),
            tsv_field(&f.audio_path),
            f.duration_ms,
            tsv_field(&f.text)
        ));
    }
    out
}

/// Writes the manifest as pretty JSON plus a TSV sibling, both atomically.
pub fn write_manifest(manifest: &CorpusManifest, path: &Path) -> Result<(), CorpusError> {
    manifest.check()?;
    let mut json = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    json.push(b'\n');
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_atomic(path, &json)?;
    write_atomic(&tsv_path(path), render_tsv(manifest).as_bytes())?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<CorpusManifest, CorpusError> {
    let bytes = fs::read(path)?;
    let m: CorpusManifest =
        serde_json::from_slice(&bytes).map_err(|e| CorpusError::SchemaError(e.to_string()))?;
    m.check()?;
    Ok(m)
}
