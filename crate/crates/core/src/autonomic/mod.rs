//! Autonomic measures: electrodermal responses, cardiac intervals, per-person
//! baselines, arousal flags and interpersonal distance.

pub mod ecg;
pub mod eda;
pub mod hrv;
pub mod proxemics;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{degenerate, Error, Result};

pub use ecg::detect_r_peaks;
pub use eda::{detect_scr_peaks, extract_phasic, EdaPhasic, ScrEvent};
pub use hrv::{correct_rr, hrv_windows, rmssd, HrvWindow};
pub use proxemics::{proxemics, PositionSample, ProxemicsSample, RigidTransform};

/// Resting recordings shorter than this produce a warning.
pub const MIN_BASELINE_S: f64 = 30.0;
/// Ratio applied to the baseline mean before flagging arousal.
pub const DEFAULT_AROUSAL_RATIO: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineModality {
    Scr,
    Hrv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub modality: BaselineModality,
    pub mean: f64,
    pub std: f64,
    /// Length of the resting recording in seconds.
    pub duration: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Baseline {
    /// Mean and population standard deviation of a resting-state feature.
    pub fn from_values(modality: BaselineModality, values: &[f64], duration: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty);
        }
        let mean = crate::math::mean(values);
        let std = crate::math::std_dev(values);
        if !(std > 0.0) {
            return Err(degenerate("baseline feature has zero spread"));
        }
        let mut warnings = Vec::new();
        if duration < MIN_BASELINE_S {
            warnings.push(format!(
                "baseline recording is {duration:.1} s, shorter than {MIN_BASELINE_S} s"
            ));
        }
        Ok(Self {
            modality,
            mean,
            std,
            duration,
            warnings,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArousalState {
    Resting,
    Elevated,
}

/// SCR amplitudes are elevated at or above `ratio` times the baseline mean.
/// RMSSD runs the other way: elevated at or below the mean divided by `ratio`.
pub fn arousal_flag(value: f64, baseline: Option<&Baseline>, ratio: f64) -> Result<ArousalState> {
    let b = baseline.ok_or_else(|| Error::MissingCalibration("arousal baseline".into()))?;
    let elevated = match b.modality {
        BaselineModality::Scr => value >= ratio * b.mean,
        BaselineModality::Hrv => value <= b.mean / ratio,
    };
    Ok(if elevated {
        ArousalState::Elevated
    } else {
        ArousalState::Resting
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scr_baseline() -> Baseline {
        Baseline::from_values(BaselineModality::Scr, &[0.18, 0.2, 0.22], 60.0).unwrap()
    }

    #[test]
    fn scr_ratio_rule() {
        let b = scr_baseline();
        assert_eq!(
            arousal_flag(1.5 * b.mean, Some(&b), DEFAULT_AROUSAL_RATIO).unwrap(),
            ArousalState::Elevated
        );
        assert_eq!(
            arousal_flag(b.mean, Some(&b), DEFAULT_AROUSAL_RATIO).unwrap(),
            ArousalState::Resting
        );
    }

    #[test]
    fn hrv_rule_is_inverted() {
        let b = Baseline::from_values(BaselineModality::Hrv, &[40.0, 50.0, 60.0], 60.0).unwrap();
        assert_eq!(
            arousal_flag(25.0, Some(&b), 1.5).unwrap(),
            ArousalState::Elevated
        );
        assert_eq!(arousal_flag(50.0, Some(&b), 1.5).unwrap(), ArousalState::Resting);
    }

    #[test]
    fn missing_and_degenerate_baselines() {
        assert!(matches!(
            arousal_flag(1.0, None, 1.5),
            Err(Error::MissingCalibration(_))
        ));
        assert!(Baseline::from_values(BaselineModality::Scr, &[1.0, 1.0], 60.0).is_err());
        let short = Baseline::from_values(BaselineModality::Scr, &[1.0, 2.0], 10.0).unwrap();
        assert_eq!(short.warnings.len(), 1);
    }
}
