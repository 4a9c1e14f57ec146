//! Frame RMS energy and low-energy boundary search.

use super::{AudioBuffer, AudioError};
use crate::subtitle::TimeMs;

/// Frame length used when snapping boundaries to silence.
pub const SNAP_FRAME_MS: u64 = 20;
/// Hop between candidate frames when snapping.
pub const SNAP_HOP_MS: u64 = 10;

/// Energies closer than this to the minimum count as tied.
const TIE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTrack {
    pub frame_ms: u64,
    pub hop_ms: u64,
    /// RMS of frame `i`, which starts at `i · hop_ms`.
    pub energies: Vec<f64>,
}

fn rms(samples: &[i16]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let sum: f64 = samples.iter().map(|&s| f64::from(s) * f64::from(s)).sum();
    (sum / samples.len() as f64).sqrt()
}

/// RMS energy of fixed-length frames taken every `hop_ms`.
///
/// Only whole frames are produced: audio shorter than one frame yields an
/// empty track.
pub fn rms_frames(buffer: &AudioBuffer, frame_ms: u64, hop_ms: u64) -> Result<EnergyTrack, AudioError> {
    if hop_ms == 0 || frame_ms < hop_ms {
        return Err(AudioError::InvalidFraming { frame_ms, hop_ms });
    }
    let duration = buffer.duration_ms();
    let count = if duration < frame_ms {
        0
    } else {
        1 + (duration - frame_ms) / hop_ms
    };
    let energies = (0..count)
        .map(|i| {
            let start = i * hop_ms;
            let a = buffer.sample_index(start);
            let b = buffer.sample_index(start + frame_ms);
            rms(&buffer.samples[a..b])
        })
        .collect();
    Ok(EnergyTrack {
        frame_ms,
        hop_ms,
        energies,
    })
}

/// Finds the quietest point near `around`.
///
/// Candidate frames (20 ms long) are centred at `around + k·10 ms` for every
/// `k` that keeps the centre inside `[around − window, around + window]`
/// clipped to the audio. The result is the centre of a minimum-RMS frame.
/// When several frames share the minimum (typically a stretch of digital
/// silence), the one deepest inside its run of tied frames wins, then the
/// one closest to `around`, then the earliest.
pub fn find_low_energy_point(buffer: &AudioBuffer, around: TimeMs, window_ms: u64) -> TimeMs {
    let duration = buffer.duration_ms();
    let around = around.0.min(duration);
    if window_ms == 0 || duration == 0 {
        return TimeMs(around);
    }
    let lo = around.saturating_sub(window_ms);
    let hi = (around + window_ms).min(duration);
    let reach = (window_ms / SNAP_HOP_MS) as i64;
    let half = SNAP_FRAME_MS / 2;

    let candidates: Vec<(u64, f64)> = (-reach..=reach)
        .filter_map(|k| {
            let c = around as i64 + k * SNAP_HOP_MS as i64;
            (c >= lo as i64 && c <= hi as i64).then_some(c as u64)
        })
        .map(|c| {
            let a = buffer.sample_index(c.saturating_sub(half));
            let b = buffer.sample_index((c + half).min(duration));
            (c, rms(&buffer.samples[a..b]))
        })
        .collect();

    let min = candidates
        .iter()
        .map(|&(_, e)| e)
        .fold(f64::INFINITY, f64::min);
    let tied: Vec<bool> = candidates
        .iter()
        .map(|&(_, e)| e - min <= TIE_EPSILON)
        .collect();

    // Distance from each tied candidate to the nearest untied one (or to the
    // edge of the candidate list).
    let n = tied.len();
    let mut left = vec![0usize; n];
    let mut right = vec![0usize; n];
    for i in 0..n {
        if tied[i] {
            left[i] = if i > 0 && tied[i - 1] { left[i - 1] + 1 } else { 1 };
        }
    }
    for i in (0..n).rev() {
        if tied[i] {
            right[i] = if i + 1 < n && tied[i + 1] { right[i + 1] + 1 } else { 1 };
        }
    }

    let best = (0..n)
        .filter(|&i| tied[i])
        .min_by_key(|&i| {
            let depth = left[i].min(right[i]);
            let c = candidates[i].0;
            (std::cmp::Reverse(depth), c.abs_diff(around), c)
        });
    TimeMs(best.map_or(around, |i| candidates[i].0))
}
