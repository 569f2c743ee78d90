//! Continuous EEG to decoded target: broadband filtering, alpha peak, SSD
//! dimensionality reduction, epoching, artifact rejection and SPoC.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dsp::{epoch_ranges, EpochSpec, FilterSpec};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::decompose::{decode_target, patterns, spoc, ssd, Decoded, Decomposition, Method};
use super::{
    column_slice, epoch_covariances, estimate_alpha_peak, filter_rows, reject_artifacts,
    AlphaPeak, BandDefinition, DEFAULT_SHRINKAGE,
};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub shrinkage: f64,
    /// Upper bound on SSD components kept before SPoC.
    pub ssd_components: usize,
    pub spoc_components: usize,
    pub epoch: EpochSpec,
    pub broadband: (f64, f64),
    /// Peak-to-peak rejection threshold in data units; `None` keeps all.
    pub artifact_threshold: Option<f64>,
    /// Skips peak estimation when set.
    pub alpha_center: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            shrinkage: DEFAULT_SHRINKAGE,
            ssd_components: 10,
            spoc_components: 1,
            epoch: EpochSpec::EEG,
            broadband: (1.0, 40.0),
            artifact_threshold: None,
            alpha_center: None,
        }
    }
}

/// Fitted decoder, serializable as versioned JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuroModel {
    pub version: u32,
    pub channel_labels: Vec<String>,
    pub sample_rate: f64,
    pub config: PipelineConfig,
    pub alpha: AlphaPeak,
    pub band: BandDefinition,
    pub ssd: Decomposition,
    pub spoc: Decomposition,
    /// SSD and SPoC filters composed into sensor space, with sensor
    /// patterns against the alpha-band covariance.
    pub combined: Decomposition,
    pub train_correlations: Vec<f64>,
    pub kept_epochs: usize,
    pub rejected_epochs: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
}

fn broadband(data: &Matrix, fs: f64, cfg: &PipelineConfig) -> Result<Matrix> {
    let hi = cfg.broadband.1.min(0.45 * fs);
    filter_rows(data, &FilterSpec::bandpass(cfg.broadband.0, hi, fs))
}

fn cut(data: &Matrix, fs: f64, spec: &EpochSpec) -> Result<Vec<Matrix>> {
    Ok(epoch_ranges(data.cols(), fs, spec)?
        .into_iter()
        .map(|r| column_slice(data, r.start, r.end))
        .collect())
}

/// Number of epochs `fit_pipeline` and `decode` cut from `samples` samples.
pub fn epoch_count(samples: usize, sample_rate: f64, spec: &EpochSpec) -> Result<usize> {
    Ok(epoch_ranges(samples, sample_rate, spec)?.len())
}

/// Fits the decoder on a continuous `channels × samples` recording and one
/// target value per epoch.
pub fn fit_pipeline(
    data: &Matrix,
    sample_rate: f64,
    channel_labels: Vec<String>,
    targets: &[f64],
    config: &PipelineConfig,
) -> Result<NeuroModel> {
    let c = data.rows();
    if channel_labels.len() != c {
        return Err(Error::DimensionMismatch {
            expected: c,
            got: channel_labels.len(),
        });
    }
    let mut warnings = Vec::new();
    if c < super::RECOMMENDED_CHANNELS {
        warnings.push(alloc::format!(
            "{c} EEG channels; {} recommended",
            super::RECOMMENDED_CHANNELS
        ));
    }
    let bb = broadband(data, sample_rate, config)?;
    let alpha = match config.alpha_center {
        Some(center) => AlphaPeak {
            center,
            fallback: false,
            warnings: Vec::new(),
        },
        None => estimate_alpha_peak(&bb, sample_rate)?,
    };
    warnings.extend(alpha.warnings.iter().cloned());
    let band = BandDefinition::new(alpha.center)?;

    let k_ssd = config.ssd_components.clamp(1, c);
    let ssd_fit = ssd(
        core::slice::from_ref(&bb),
        sample_rate,
        &band,
        k_ssd,
        config.shrinkage,
    )?;

    let (lo, hi) = band.signal();
    let alpha_band = filter_rows(&bb, &FilterSpec::bandpass(lo, hi, sample_rate))?;
    let sensor_epochs = cut(&alpha_band, sample_rate, &config.epoch)?;
    if sensor_epochs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: sensor_epochs.len(),
            got: targets.len(),
        });
    }
    let keep = match config.artifact_threshold {
        Some(th) => reject_artifacts(&cut(&bb, sample_rate, &config.epoch)?, th)?,
        None => alloc::vec![true; sensor_epochs.len()],
    };
    let kept: Vec<Matrix> = sensor_epochs
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(e, _)| e.clone())
        .collect();
    let z: Vec<f64> = targets
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(v, _)| *v)
        .collect();

    let w_ssd_t = ssd_fit.decomposition.filters.transpose();
    let component_epochs = kept
        .iter()
        .map(|e| w_ssd_t.matmul(e))
        .collect::<Result<Vec<_>>>()?;
    let k_spoc = config.spoc_components.clamp(1, k_ssd);
    let spoc_fit = spoc(&component_epochs, &z, k_spoc, config.shrinkage)?;

    let filters = ssd_fit
        .decomposition
        .filters
        .matmul(&spoc_fit.decomposition.filters)?;
    let sensor_cov = epoch_covariances(&kept, 0.0)?.mean;
    let combined = Decomposition {
        method: Method::Spoc,
        patterns: patterns(&sensor_cov, &filters)?,
        filters,
        eigenvalues: spoc_fit.decomposition.eigenvalues.clone(),
    };
    Ok(NeuroModel {
        version: MODEL_VERSION,
        channel_labels,
        sample_rate,
        config: config.clone(),
        alpha,
        band,
        ssd: ssd_fit.decomposition,
        spoc: spoc_fit.decomposition,
        combined,
        train_correlations: spoc_fit.train_correlations,
        kept_epochs: kept.len(),
        rejected_epochs: keep.len() - z.len(),
        warnings,
    })
}

impl NeuroModel {
    /// Broadband then signal-band filtered epochs of a new recording.
    pub fn alpha_epochs(&self, data: &Matrix) -> Result<Vec<Matrix>> {
        if data.rows() != self.channel_labels.len() {
            return Err(Error::DimensionMismatch {
                expected: self.channel_labels.len(),
                got: data.rows(),
            });
        }
        let bb = broadband(data, self.sample_rate, &self.config)?;
        let (lo, hi) = self.band.signal();
        let alpha = filter_rows(&bb, &FilterSpec::bandpass(lo, hi, self.sample_rate))?;
        cut(&alpha, self.sample_rate, &self.config.epoch)
    }

    /// Per-epoch prediction from the first combined component.
    pub fn decode(&self, data: &Matrix, truth: Option<&[f64]>) -> Result<Decoded> {
        let epochs = self.alpha_epochs(data)?;
        decode_target(&self.combined, 0, &epochs, truth)
    }
}
