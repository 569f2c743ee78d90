//! Nonverbal speech parameters: voice activity, pitch contour, calibrated
//! loudness in sones and speaking rate, aggregated per window and per
//! utterance.

pub mod loudness;
pub mod pitch;
pub mod vad;

#[allow(unused_imports)]
use num_traits::Float;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use loudness::{compute_loudness, loudness_from_levels, third_octave_levels};
pub use pitch::{estimate_pitch, pitch_contour, PitchPoint, PitchRange};
pub use vad::{detect_voice_activity, rms_db_spl};

/// Mean loudness above which an utterance is flagged as loud.
pub const LOUDNESS_HIGH_SONE: f64 = 8.0;
/// Level reported for digital silence instead of negative infinity.
pub const SILENCE_DB: f64 = -120.0;
/// Provenance attached to valence and arousal supplied by an outside model.
pub const EXTERNAL_AFFECT_SOURCE: &str = "external-model";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProsodyConfig {
    /// dB added to the digital level to obtain SPL at 1 m.
    pub calibration_offset_db: Option<f64>,
    pub window: f64,
    pub hop: f64,
    pub pitch_range: (f64, f64),
    pub vad_threshold_db: f64,
    pub hangover_ms: f64,
}

impl Default for ProsodyConfig {
    fn default() -> Self {
        Self {
            calibration_offset_db: None,
            window: 2.0,
            hop: 0.5,
            pitch_range: (PitchRange::DEFAULT.min_hz, PitchRange::DEFAULT.max_hz),
            vad_threshold_db: vad::DEFAULT_THRESHOLD_DB,
            hangover_ms: vad::DEFAULT_HANGOVER_MS,
        }
    }
}

impl ProsodyConfig {
    pub fn range(&self) -> PitchRange {
        PitchRange {
            min_hz: self.pitch_range.0,
            max_hz: self.pitch_range.1,
        }
    }

    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        if !(self.hop > 0.0 && self.window >= self.hop) {
            return Err(invalid("prosody window must be at least the hop, hop > 0"));
        }
        self.range().validate(sample_rate)
    }

    fn offset(&self) -> Result<f64> {
        self.calibration_offset_db
            .ok_or_else(|| Error::MissingCalibration("audio calibration offset".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProsodyFrame {
    pub t0: f64,
    pub t1: f64,
    pub voiced: bool,
    pub pitch_hz: Option<f64>,
    pub loudness_sone: f64,
    pub rms_db_spl: f64,
}

/// Windowed prosody of a calibrated recording starting at `t_start`.
///
/// The pitch contour, activity flags and 250 ms loudness blocks are computed
/// once over the whole signal; each window then summarizes the parts it
/// covers. Contour points count as voiced only inside active VAD frames.
pub fn analyze_prosody(
    audio: &[f64],
    sample_rate: f64,
    t_start: f64,
    config: &ProsodyConfig,
) -> Result<Vec<ProsodyFrame>> {
    config.validate(sample_rate)?;
    let offset = config.offset()?;
    let win = (config.window * sample_rate).round() as usize;
    let hop = ((config.hop * sample_rate).round() as usize).max(1);
    if audio.len() < win {
        return Err(Error::TooShort {
            needed: win,
            got: audio.len(),
        });
    }
    let contour = pitch_contour(audio, sample_rate, &config.range())?;
    let active = detect_voice_activity(
        audio,
        sample_rate,
        offset,
        config.vad_threshold_db,
        config.hangover_ms,
    );
    let gated: Vec<PitchPoint> = contour
        .iter()
        .map(|p| {
            let frame = (p.t / vad::FRAME_S) as usize;
            PitchPoint {
                t: p.t,
                f0: p.f0.filter(|_| active.get(frame).copied().unwrap_or(false)),
            }
        })
        .collect();
    let block = ((loudness::SUBWINDOW_S * sample_rate).round() as usize).max(1);
    let blocks: Vec<f64> = audio
        .chunks_exact(block)
        .map(|c| loudness_from_levels(&third_octave_levels(c, sample_rate, offset)))
        .collect();

    let mut frames = Vec::new();
    let mut start = 0;
    while start + win <= audio.len() {
        let end = start + win;
        let (t0, t1) = (start as f64 / sample_rate, end as f64 / sample_rate);
        let points: Vec<PitchPoint> = gated
            .iter()
            .filter(|p| p.t >= t0 && p.t < t1)
            .copied()
            .collect();
        let pitch_hz = pitch::summarize_contour(&points);
        let inside: Vec<f64> = (start.div_ceil(block)..end / block)
            .filter_map(|b| blocks.get(b).copied())
            .collect();
        let loudness_sone = if inside.is_empty() {
            compute_loudness(&audio[start..end], sample_rate, Some(offset))?
        } else {
            crate::math::mean(&inside)
        };
        frames.push(ProsodyFrame {
            t0: t_start + t0,
            t1: t_start + t1,
            voiced: pitch_hz.is_some(),
            pitch_hz,
            loudness_sone,
            rms_db_spl: rms_db_spl(&audio[start..end], offset).max(SILENCE_DB),
        });
        start += hop;
    }
    Ok(frames)
}

/// Words per minute.
pub fn speaking_rate(word_count: usize, duration_s: f64) -> Result<f64> {
    if !(duration_s > 0.0) {
        return Err(invalid("speaking rate needs a positive duration"));
    }
    Ok(60.0 * word_count as f64 / duration_s)
}

/// Valence and arousal produced outside this crate, kept with their source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalAffect {
    pub valence: f64,
    pub arousal: f64,
    pub source: String,
}

impl ExternalAffect {
    pub fn new(valence: f64, arousal: f64) -> Result<Self> {
        for v in [valence, arousal] {
            if !(-1.0..=1.0).contains(&v) {
                return Err(invalid("valence and arousal must lie in [-1, 1]"));
            }
        }
        Ok(Self {
            valence,
            arousal,
            source: EXTERNAL_AFFECT_SOURCE.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceProsody {
    pub pitch_mean_hz: Option<f64>,
    pub pitch_min_hz: Option<f64>,
    pub pitch_max_hz: Option<f64>,
    /// Mean over all frames, voiced or not.
    pub loudness_mean_sone: f64,
    pub loudness_high: bool,
    pub duration_s: f64,
    /// Present when a transcript word count was supplied.
    pub speaking_rate_wpm: Option<f64>,
    pub affect: Option<ExternalAffect>,
}

/// Pitch statistics over voiced frames and mean loudness over all frames.
pub fn aggregate_utterance(
    frames: &[ProsodyFrame],
    transcript_words: Option<usize>,
) -> Result<UtteranceProsody> {
    let first = frames.first().ok_or(Error::Empty)?;
    let t0 = frames.iter().map(|f| f.t0).fold(first.t0, f64::min);
    let t1 = frames.iter().map(|f| f.t1).fold(first.t1, f64::max);
    let duration_s = t1 - t0;
    let pitches: Vec<f64> = frames.iter().filter_map(|f| f.pitch_hz).collect();
    let (mean, min, max) = if pitches.is_empty() {
        (None, None, None)
    } else {
        let min = pitches.iter().copied().fold(f64::INFINITY, f64::min);
        let max = pitches.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = crate::math::mean(&pitches).clamp(min, max);
        (Some(mean), Some(min), Some(max))
    };
    let loudness: Vec<f64> = frames.iter().map(|f| f.loudness_sone).collect();
    let loudness_mean_sone = crate::math::mean(&loudness);
    let speaking_rate_wpm = transcript_words
        .map(|w| speaking_rate(w, duration_s))
        .transpose()?;
    Ok(UtteranceProsody {
        pitch_mean_hz: mean,
        pitch_min_hz: min,
        pitch_max_hz: max,
        loudness_mean_sone,
        loudness_high: loudness_mean_sone > LOUDNESS_HIGH_SONE,
        duration_s,
        speaking_rate_wpm,
        affect: None,
    })
}
