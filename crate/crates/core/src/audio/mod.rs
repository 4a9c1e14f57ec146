//! Mono 16-bit PCM buffers: WAV I/O, resampling, slicing and frame energy.

mod energy;
mod wav;

use thiserror::Error;

use crate::subtitle::TimeMs;

pub use energy::{find_low_energy_point, rms_frames, EnergyTrack, SNAP_FRAME_MS, SNAP_HOP_MS};
pub use wav::{decode_wav, encode_wav, read_wav, write_wav};

/// Rate every pipeline stage after ingest works at.
pub const PIPELINE_RATE_HZ: u32 = 16_000;

pub const SUPPORTED_RATES: [u32; 5] = [8000, 16000, 22050, 44100, 48000];

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt audio file: {0}")]
    CorruptFile(String),
    #[error("slice {start}..{end} ms is outside 0..{duration} ms")]
    OutOfRange { start: u64, end: u64, duration: u64 },
    #[error("frame length {frame_ms} ms and hop {hop_ms} ms must satisfy frame >= hop >= 1")]
    InvalidFraming { frame_ms: u64, hop_ms: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mono signed 16-bit PCM samples at a known rate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioBuffer {
    pub sample_rate_hz: u32,
    pub samples: Vec<i16>,
}

impl AudioBuffer {
    pub fn new(sample_rate_hz: u32, samples: Vec<i16>) -> Result<Self, AudioError> {
        if !SUPPORTED_RATES.contains(&sample_rate_hz) {
            return Err(AudioError::UnsupportedFormat(format!(
                "sample rate {sample_rate_hz} Hz"
            )));
        }
        Ok(AudioBuffer {
            sample_rate_hz,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Whole milliseconds covered by the samples, rounded down.
    pub fn duration_ms(&self) -> u64 {
        self.samples.len() as u64 * 1000 / u64::from(self.sample_rate_hz)
    }

    pub fn duration(&self) -> TimeMs {
        TimeMs(self.duration_ms())
    }

    /// Sample index at which millisecond `ms` starts.
    pub fn sample_index(&self, ms: u64) -> usize {
        (ms * u64::from(self.sample_rate_hz) / 1000) as usize
    }

    /// Samples as little-endian bytes, the layout of a WAV data chunk.
    pub fn pcm_bytes(&self) -> Vec<u8> {
        self.samples.iter().flat_map(|s| s.to_le_bytes()).collect()
    }

    /// Returns samples `[floor(start·r/1000), floor(end·r/1000))`.
    pub fn slice_ms(&self, start: TimeMs, end: TimeMs) -> Result<AudioBuffer, AudioError> {
        let duration = self.duration_ms();
        if start >= end || end.0 > duration {
            return Err(AudioError::OutOfRange {
                start: start.0,
                end: end.0,
                duration,
            });
        }
        let (a, b) = (self.sample_index(start.0), self.sample_index(end.0));
        Ok(AudioBuffer {
            sample_rate_hz: self.sample_rate_hz,
            samples: self.samples[a..b].to_vec(),
        })
    }

    /// Linear-interpolation resampler. Output length is
    /// `round(len · target / source)`; values are rounded and clamped.
    pub fn resample_linear(&self, target_hz: u32) -> Result<AudioBuffer, AudioError> {
        if target_hz == self.sample_rate_hz {
            return Ok(self.clone());
        }
        if !SUPPORTED_RATES.contains(&target_hz) {
            return Err(AudioError::UnsupportedFormat(format!("sample rate {target_hz} Hz")));
        }
        let src = u64::from(self.sample_rate_hz);
        let dst = u64::from(target_hz);
        let n = self.samples.len() as u64;
        let out_len = (n * dst + src / 2) / src;
        let last = self.samples.len().saturating_sub(1);
        let samples = (0..out_len)
            .map(|i| {
                // Exact rational position i·src/dst.
                let num = i * src;
                let idx = (num / dst) as usize;
                let frac = (num % dst) as f64 / dst as f64;
                let a = f64::from(self.samples[idx.min(last)]);
                let b = f64::from(self.samples[(idx + 1).min(last)]);
                let v = a + (b - a) * frac;
                v.round().clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16
            })
            .collect();
        Ok(AudioBuffer {
            sample_rate_hz: target_hz,
            samples,
        })
    }

    /// Conditions any supported buffer to the pipeline standard rate.
    pub fn to_pipeline_rate(&self) -> AudioBuffer {
        self.resample_linear(PIPELINE_RATE_HZ)
            .expect("pipeline rate is supported")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn slice_sample_count_for_sample_cue() {
        let b = AudioBuffer::new(16000, vec![0; 16000 * 21]).unwrap();
        let s = b.slice_ms(TimeMs(15761), TimeMs(17129)).unwrap();
        assert_eq!(s.len(), 21888);
        assert_eq!(s.sample_rate_hz, 16000);
    }

    #[test]
    fn full_slice_is_identity() {
        let b = AudioBuffer::new(16000, (0..1600).map(|i| i as i16).collect()).unwrap();
        assert_eq!(b.slice_ms(TimeMs(0), b.duration()).unwrap(), b);
    }

    #[test]
    fn slice_out_of_range() {
        let b = AudioBuffer::new(16000, vec![0; 1600]).unwrap();
        assert!(matches!(b.slice_ms(TimeMs(0), TimeMs(101)), Err(AudioError::OutOfRange { .. })));
        assert!(matches!(b.slice_ms(TimeMs(50), TimeMs(50)), Err(AudioError::OutOfRange { .. })));
    }

    #[test]
    fn duration_rounds_down() {
        let b = AudioBuffer::new(22050, vec![0; 22051]).unwrap();
        assert_eq!(b.duration_ms(), 1000);
        assert!(AudioBuffer::new(11025, vec![]).is_err());
    }

    #[test]
    fn resample_same_rate_and_constant() {
        let b = AudioBuffer::new(44100, vec![123, -4, 99]).unwrap();
        assert_eq!(b.resample_linear(44100).unwrap(), b);
        let c = AudioBuffer::new(44100, vec![-321; 4410]).unwrap();
        for rate in SUPPORTED_RATES {
            let r = c.resample_linear(rate).unwrap();
            assert!(r.samples.iter().all(|&v| v == -321), "{rate}");
            assert_eq!(r.len() as u64, (4410 * u64::from(rate) + 22050) / 44100);
        }
    }

    #[test]
    fn resample_sine_against_analytic() {
        let amp = 20000.0;
        let f = 1000.0;
        let sine = |t: f64| (amp * (2.0 * std::f64::consts::PI * f * t).sin()).round() as i16;
        let src: Vec<i16> = (0..48000).map(|i| sine(i as f64 / 48000.0)).collect();
        let out = AudioBuffer::new(48000, src).unwrap().resample_linear(16000).unwrap();
        assert_eq!(out.len(), 16000);
        for (i, &v) in out.samples.iter().enumerate() {
            let expected = amp * (2.0 * std::f64::consts::PI * f * i as f64 / 16000.0).sin();
            assert!((f64::from(v) - expected).abs() < 0.02 * 32768.0, "sample {i}");
        }
        // Upsampling interpolates between source points.
        let up = AudioBuffer::new(8000, (0..8000).map(|i| sine(i as f64 / 8000.0)).collect())
            .unwrap()
            .resample_linear(16000)
            .unwrap();
        // The final output point lies past the last source sample; no
        // interpolation is possible there.
        let worst = up
            .samples
            .iter()
            .enumerate()
            .take(up.len() - 1)
            .map(|(i, &v)| {
                (f64::from(v) - amp * (2.0 * std::f64::consts::PI * f * i as f64 / 16000.0).sin()).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 0.06 * 32768.0, "worst {worst}");
    }

    proptest! {
        #[test]
        fn slices_partition(len_ms in 2u64..3000, a in 0u64..3000, m in 0u64..3000, b in 0u64..3000) {
            let buf = AudioBuffer::new(16000, (0..len_ms * 16).map(|i| (i % 2000) as i16).collect()).unwrap();
            let mut pts = [a % len_ms, m % len_ms, b % len_ms + 1];
            pts.sort();
            let [a, m, b] = pts;
            prop_assume!(a < m && m < b);
            let left = buf.slice_ms(TimeMs(a), TimeMs(m)).unwrap();
            let right = buf.slice_ms(TimeMs(m), TimeMs(b)).unwrap();
            let whole = buf.slice_ms(TimeMs(a), TimeMs(b)).unwrap();
            let joined: Vec<i16> = left.samples.iter().chain(&right.samples).copied().collect();
            prop_assert_eq!(joined, whole.samples.clone());
            prop_assert!(whole.duration_ms().abs_diff(b - a) <= 1);
        }

        #[test]
        fn resample_length_and_identity(samples in proptest::collection::vec(any::<i16>(), 0..500), ri in 0usize..5, ti in 0usize..5) {
            let b = AudioBuffer::new(SUPPORTED_RATES[ri], samples).unwrap();
            let out = b.resample_linear(SUPPORTED_RATES[ti]).unwrap();
            let n = b.len() as u64;
            let (s, t) = (u64::from(SUPPORTED_RATES[ri]), u64::from(SUPPORTED_RATES[ti]));
            prop_assert_eq!(out.len() as u64, (n * t + s / 2) / s);
            if ri == ti {
                prop_assert_eq!(out, b);
            }
        }
    }
}
