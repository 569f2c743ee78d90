//! Mapping of per-modality findings onto escalation cues in [0, 1].

use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::autonomic::ArousalState;
use crate::emotion::{Emotion, EmotionProbs};
use crate::error::{invalid, Error, Result};
use crate::verbal::Formality;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueSource {
    Formality,
    Insult,
    Loudness,
    Gesture,
    Emotion,
    Scr,
    Hrv,
    Proxemics,
}

impl CueSource {
    pub const ALL: [CueSource; 8] = [
        CueSource::Formality,
        CueSource::Insult,
        CueSource::Loudness,
        CueSource::Gesture,
        CueSource::Emotion,
        CueSource::Scr,
        CueSource::Hrv,
        CueSource::Proxemics,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CueSource::Formality => "formality",
            CueSource::Insult => "insult",
            CueSource::Loudness => "loudness",
            CueSource::Gesture => "gesture",
            CueSource::Emotion => "emotion",
            CueSource::Scr => "scr",
            CueSource::Hrv => "hrv",
            CueSource::Proxemics => "proxemics",
        }
    }
}

/// One modality's contribution: value `c` and reliability `r`, both in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cue {
    pub source: CueSource,
    pub t: f64,
    pub value: f64,
    pub reliability: f64,
    /// Human-readable finding behind the value, used in rationales.
    pub label: String,
}

impl Cue {
    pub fn new(
        source: CueSource,
        t: f64,
        value: f64,
        reliability: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        let c = Self {
            source,
            t,
            value,
            reliability,
            label: label.into(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.t.is_finite() || !self.value.is_finite() || !self.reliability.is_finite() {
            return Err(Error::NonFinite);
        }
        if !(0.0..=1.0).contains(&self.value) || !(0.0..=1.0).contains(&self.reliability) {
            return Err(invalid("cue value and reliability must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Lookup values turning categorical findings into cue values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CueEncodings {
    pub informal: f64,
    pub neutral_formality: f64,
    pub formal: f64,
    pub insult: f64,
    pub loudness_high: f64,
    pub loudness_normal: f64,
    pub arousal_resting: f64,
    pub arousal_elevated: f64,
    /// Distance at and beyond which proxemics contributes 0, metres.
    pub comfort_distance_m: f64,
    /// Distance at and below which proxemics contributes 1, metres.
    pub intimate_distance_m: f64,
}

impl Default for CueEncodings {
    fn default() -> Self {
        Self {
            informal: 0.8,
            neutral_formality: 0.4,
            formal: 0.2,
            insult: 1.0,
            loudness_high: 0.8,
            loudness_normal: 0.3,
            arousal_resting: 0.2,
            arousal_elevated: 0.8,
            comfort_distance_m: 1.5,
            intimate_distance_m: 0.5,
        }
    }
}

impl CueEncodings {
    pub fn validate(&self) -> Result<()> {
        let unit = [
            self.informal,
            self.neutral_formality,
            self.formal,
            self.insult,
            self.loudness_high,
            self.loudness_normal,
            self.arousal_resting,
            self.arousal_elevated,
        ];
        if unit.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("cue encodings must lie in [0, 1]"));
        }
        if !(self.comfort_distance_m > self.intimate_distance_m && self.intimate_distance_m >= 0.0) {
            return Err(invalid("comfort distance must exceed intimate distance"));
        }
        Ok(())
    }

    pub fn formality(&self, f: Formality) -> f64 {
        match f {
            Formality::Informal => self.informal,
            Formality::Neutral => self.neutral_formality,
            Formality::Formal => self.formal,
        }
    }

    pub fn loudness(&self, high: bool) -> f64 {
        if high {
            self.loudness_high
        } else {
            self.loudness_normal
        }
    }

    pub fn arousal(&self, state: ArousalState) -> f64 {
        match state {
            ArousalState::Resting => self.arousal_resting,
            ArousalState::Elevated => self.arousal_elevated,
        }
    }

    /// Escalation index in [−1, 1] mapped to `(index + 1) / 2`.
    pub fn gesture(&self, index: f64) -> f64 {
        ((index.clamp(-1.0, 1.0) + 1.0) / 2.0).clamp(0.0, 1.0)
    }

    /// Probability mass on anger, disgust and fear.
    pub fn emotion(&self, probs: &EmotionProbs) -> f64 {
        [Emotion::Anger, Emotion::Disgust, Emotion::Fear]
            .iter()
            .map(|e| probs.probabilities.get(*e as usize).copied().unwrap_or(0.0))
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }

    /// Linear ramp from 0 at the comfort distance to 1 at the intimate one.
    pub fn proxemics(&self, distance_m: f64) -> f64 {
        let span = self.comfort_distance_m - self.intimate_distance_m;
        ((self.comfort_distance_m - distance_m) / span).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encodings() {
        let e = CueEncodings::default();
        e.validate().unwrap();
        assert_eq!(e.gesture(-1.0), 0.0);
        assert_eq!(e.gesture(1.0), 1.0);
        assert_eq!(e.gesture(0.6), 0.8);
        assert_eq!(e.arousal(ArousalState::Elevated), 0.8);
        assert_eq!(e.formality(Formality::Informal), 0.8);
        assert_eq!(e.proxemics(0.2), 1.0);
        assert_eq!(e.proxemics(3.0), 0.0);
        assert!((e.proxemics(1.0) - 0.5).abs() < 1e-12);
        assert!(Cue::new(CueSource::Gesture, 0.0, 1.2, 1.0, "").is_err());
        assert!(Cue::new(CueSource::Gesture, 0.0, f64::NAN, 1.0, "").is_err());
    }

    #[test]
    fn serde_names() {
        let s = serde_json::to_string(&CueSource::Proxemics).unwrap();
        assert_eq!(s, "\"proxemics\"");
        for c in CueSource::ALL {
            assert_eq!(serde_json::to_string(&c).unwrap(), alloc::format!("\"{}\"", c.name()));
        }
    }

    proptest! {
        #[test]
        fn gesture_encoding_in_unit(i in -5.0f64..5.0) {
            let v = CueEncodings::default().gesture(i);
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
