//! RIFF/WAVE PCM 16-bit reading and writing.

use std::fs;
use std::path::Path;

use super::{AudioBuffer, AudioError};

const FORMAT_PCM: u16 = 1;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

struct Format {
    channels: u16,
    sample_rate: u32,
}

/// Decodes a WAV image held in memory. Stereo is downmixed to mono.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer, AudioError> {
    let corrupt = |msg: &str| AudioError::CorruptFile(msg.to_string());
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::UnsupportedFormat("not a RIFF/WAVE file".into()));
    }

    let mut format: Option<Format> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                if size < 16 || body + size > bytes.len() {
                    return Err(corrupt("truncated fmt chunk"));
                }
                let tag = u16_at(bytes, body);
                let channels = u16_at(bytes, body + 2);
                let sample_rate = u32_at(bytes, body + 4);
                let bits = u16_at(bytes, body + 14);
                let pcm = match tag {
                    FORMAT_PCM => true,
                    // Extensible headers carry the real format in the sub-format GUID.
                    FORMAT_EXTENSIBLE if size >= 40 => u16_at(bytes, body + 24) == FORMAT_PCM,
                    _ => false,
                };
                if !pcm {
                    return Err(AudioError::UnsupportedFormat(format!("format tag {tag:#06x}")));
                }
                if bits != 16 {
                    return Err(AudioError::UnsupportedFormat(format!("{bits}-bit samples")));
                }
                if !(1..=2).contains(&channels) {
                    return Err(AudioError::UnsupportedFormat(format!("{channels} channels")));
                }
                if !super::SUPPORTED_RATES.contains(&sample_rate) {
                    return Err(AudioError::UnsupportedFormat(format!(
                        "sample rate {sample_rate} Hz"
                    )));
                }
                format = Some(Format {
                    channels,
                    sample_rate,
                });
            }
            b"data" => {
                let fmt = format.ok_or_else(|| corrupt("data chunk before fmt chunk"))?;
                if body + size > bytes.len() {
                    return Err(corrupt("truncated data chunk"));
                }
                let frame_bytes = 2 * fmt.channels as usize;
                if size % frame_bytes != 0 {
                    return Err(corrupt("data chunk is not a whole number of frames"));
                }
                let data = &bytes[body..body + size];
                let samples = match fmt.channels {
                    1 => data
                        .chunks_exact(2)
                        .map(|c| i16::from_le_bytes([c[0], c[1]]))
                        .collect(),
                    _ => data
                        .chunks_exact(4)
                        .map(|c| {
                            let l = i16::from_le_bytes([c[0], c[1]]);
                            let r = i16::from_le_bytes([c[2], c[3]]);
                            downmix(l, r)
                        })
                        .collect(),
                };
                return AudioBuffer::new(fmt.sample_rate, samples);
            }
            _ => {}
        }
        // Chunks are word aligned.
        pos = body.saturating_add(size).saturating_add(size & 1);
    }
    Err(corrupt("no data chunk"))
}

/// Average of two channels, rounded to nearest with ties away from zero.
fn downmix(l: i16, r: i16) -> i16 {
    let sum = i32::from(l) + i32::from(r);
    let avg = if sum >= 0 { (sum + 1) / 2 } else { (sum - 1) / 2 };
    avg as i16
}

/// Encodes `buffer` as a canonical 44-byte-header mono PCM WAV image.
pub fn encode_wav(buffer: &AudioBuffer) -> Vec<u8> {
    let data_len = buffer.samples.len() * 2;
    let rate = buffer.sample_rate_hz;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for s in &buffer.samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

pub fn read_wav(path: &Path) -> Result<AudioBuffer, AudioError> {
    decode_wav(&fs::read(path)?)
}

pub fn write_wav(buffer: &AudioBuffer, path: &Path) -> Result<(), AudioError> {
    crate::fsutil::write_atomic(path, &encode_wav(buffer))?;
    Ok(())
}
