//! Voice activity from short-time energy in calibrated dB SPL with a
//! hangover after each active frame.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

/// Frame length of the activity decision.
pub const FRAME_S: f64 = 0.025;
pub const DEFAULT_THRESHOLD_DB: f64 = 45.0;
pub const DEFAULT_HANGOVER_MS: f64 = 200.0;

/// Level of a frame in dB SPL; digital silence is negative infinity.
pub fn rms_db_spl(frame: &[f64], calibration_offset_db: f64) -> f64 {
    if frame.is_empty() {
        return f64::NEG_INFINITY;
    }
    let ms = frame.iter().map(|v| v * v).sum::<f64>() / frame.len() as f64;
    if ms > 0.0 {
        10.0 * ms.log10() + calibration_offset_db
    } else {
        f64::NEG_INFINITY
    }
}

/// Samples per activity frame at `sample_rate`.
pub fn frame_len(sample_rate: f64) -> usize {
    ((FRAME_S * sample_rate).round() as usize).max(1)
}

/// One flag per 25 ms frame (a trailing partial frame counts as a frame).
/// A frame is active when its level reaches `threshold_db` or when it falls
/// within `hangover_ms` after an active frame.
pub fn detect_voice_activity(
    audio: &[f64],
    sample_rate: f64,
    calibration_offset_db: f64,
    threshold_db: f64,
    hangover_ms: f64,
) -> Vec<bool> {
    let hang = (hangover_ms.max(0.0) / 1000.0 / FRAME_S).ceil() as usize;
    let mut remaining = 0usize;
    audio
        .chunks(frame_len(sample_rate))
        .map(|f| {
            if rms_db_spl(f, calibration_offset_db) >= threshold_db {
                remaining = hang;
                true
            } else if remaining > 0 {
                remaining -= 1;
                true
            } else {
                false
            }
        })
        .collect()
}
