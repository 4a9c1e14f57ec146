//! Synthetic sources shared by the integration and acceptance tests.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use forge::pipeline::{CANDIDATES_FILE, SEGMENTS_DIR};
use forge::PipelineConfig;
use forge_core::alignment::load_sync_map;
use forge_core::audio::{read_wav, write_wav};
use forge_core::corpus::fragment_id;
use forge_core::validation::audio_fingerprint;
use forge_core::{AudioBuffer, EntryStatus};

pub const RATE: u32 = 16_000;
const GAP_MS: u64 = 600;

pub const CUE_TEXTS: [&str; 10] = [
    "(박수) 안녕하세요, 여러분!",
    "오늘 제가 얘기할 주제는요",
    "예술가가 되자. 지금 당장! 입니다.",
    "[음악] 감사합니다",
    "우리 동네를 살 만한 곳으로",
    "땅의 진짜 주인은 누구일까요?",
    "내가 있는 곳에서 시작하기",
    "옛날 형식에 새 이야기를 담다",
    "소통은 회복입니다",
    "함께 걸어요 — 제주 올레",
];

/// Cue layout: `GAP_MS` of near silence, then a tone burst for each cue.
/// Returns (begin_ms, end_ms) of every burst.
pub fn layout(n: usize) -> Vec<(u64, u64)> {
    let mut t = GAP_MS;
    (0..n)
        .map(|i| {
            let d = 900 + 150 * (i as u64 % 5);
            let span = (t, t + d);
            t += d + GAP_MS;
            span
        })
        .collect()
}

/// Tone bursts separated by low-level noise, deterministic per `seed`.
pub fn synth_audio(n: usize, seed: u32) -> AudioBuffer {
    let spans = layout(n);
    let total_ms = spans.last().map_or(GAP_MS, |s| s.1 + GAP_MS);
    let len = (total_ms * u64::from(RATE) / 1000) as usize;
    let mut state = 0x9E37_79B9u32 ^ seed;
    let mut samples: Vec<i16> = (0..len)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 17;
            state ^= state << 5;
            (state % 61) as i16 - 30
        })
        .collect();
    for (i, &(b, e)) in spans.iter().enumerate() {
        let f = 220.0 + 55.0 * i as f64 + f64::from(seed % 7) * 11.0;
        let (sb, se) = ((b * 16) as usize, (e * 16) as usize);
        for (k, s) in samples[sb..se].iter_mut().enumerate() {
            let t = k as f64 / f64::from(RATE);
            *s = (9000.0 * (2.0 * std::f64::consts::PI * f * t).sin()) as i16;
        }
    }
    AudioBuffer::new(RATE, samples).unwrap()
}

fn ts(ms: u64) -> String {
    format!("{:02}:{:02}:{:02},{:03}", ms / 3_600_000, ms / 60_000 % 60, ms / 1000 % 60, ms % 1000)
}

/// SRT whose cue times sit a little off the bursts, as real subtitles do.
pub fn synth_srt(n: usize) -> String {
    layout(n)
        .iter()
        .enumerate()
        .map(|(i, &(b, e))| {
            let skew = [40u64, 0, 70, 20, 55][i % 5];
            format!("{}\n{} --> {}\n{}\n\n", i + 1, ts(b - skew), ts(e + skew / 2), CUE_TEXTS[i % CUE_TEXTS.len()])
        })
        .collect()
}

/// Writes `<dir>/<id>.wav` and `<dir>/<id>.srt`.
pub fn write_source(dir: &Path, id: &str, n: usize, seed: u32) -> (PathBuf, PathBuf) {
    let wav = dir.join(format!("{id}.wav"));
    let srt = dir.join(format!("{id}.srt"));
    write_wav(&synth_audio(n, seed), &wav).unwrap();
    fs::write(&srt, synth_srt(n)).unwrap();
    (wav, srt)
}

pub fn local_source(id: &str) -> serde_json::Value {
    serde_json::json!({
        "source_id": id,
        "media": {"path": format!("{id}.wav")},
        "subtitle": {"path": format!("{id}.srt")},
        "language_code": "ko-KR"
    })
}

/// Writes `<dir>/forge.json` with a mock backend reading `<dir>/mock.json`.
pub fn write_config(dir: &Path, sources: Vec<serde_json::Value>, parallelism: usize) -> PathBuf {
    let cfg = serde_json::json!({
        "version": 1,
        "sources": sources,
        "backend": {"mock": {"table": "mock.json"}},
        "parallelism": parallelism,
        "out_dir": "out",
        "corpus_name": "synthetic",
        "license": "CC0-1.0"
    });
    let path = dir.join("forge.json");
    fs::write(&path, serde_json::to_vec_pretty(&cfg).unwrap()).unwrap();
    path
}

/// Builds the mock transcript table from the transform stage's candidate
/// slices. Entries whose id is in `corrupt` get an unrelated transcript.
pub fn write_mock_table(config: &PipelineConfig, corrupt: &[(&str, u32)]) -> BTreeMap<String, String> {
    let mut table = BTreeMap::new();
    for s in &config.sources {
        let work = config.work_dir(&s.source_id);
        let map = load_sync_map(&fs::read(work.join(CANDIDATES_FILE)).unwrap()).unwrap();
        for e in map.entries.iter().filter(|e| e.status == EntryStatus::Pending) {
            let id = fragment_id(&s.source_id, e.id);
            let slice = read_wav(&work.join(SEGMENTS_DIR).join(format!("{id}.wav"))).unwrap();
            let hyp = if corrupt.contains(&(s.source_id.as_str(), e.id)) {
                "전혀 관계없는 엉뚱한 문장이 인식되었습니다".to_string()
            } else {
                // Recognizers punctuate differently; normalization absorbs it.
                format!("{}.", e.text)
            };
            table.insert(audio_fingerprint(&slice), hyp);
        }
    }
    fs::write(config.resolve(Path::new("mock.json")), serde_json::to_vec_pretty(&table).unwrap()).unwrap();
    table
}

/// Every regular file under `root` with its bytes, keyed by relative path.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}
