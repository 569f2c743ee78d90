//! EEG alpha-band decoding: individual alpha peak, shrinkage covariances,
//! spatio-spectral decomposition (SSD), source power comodulation (SPoC) and
//! target decoding.

pub mod decompose;
pub mod pipeline;

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dsp::{design_filter, epoch_ranges, welch_psd, EpochSpec, FilterSpec};
use crate::error::{degenerate, invalid, Error, Result};
use crate::linalg::Matrix;

pub use decompose::{decode_target, spoc, ssd, Decoded, Decomposition, Method};
pub use pipeline::{fit_pipeline, NeuroModel, PipelineConfig};

/// Channel count below which source decomposition is considered underpowered.
pub const RECOMMENDED_CHANNELS: usize = 32;
pub const DEFAULT_SHRINKAGE: f64 = 0.05;
pub const ALPHA_SEARCH: (f64, f64) = (7.0, 13.0);
pub const FALLBACK_ALPHA_HZ: f64 = 10.0;
/// Minimum recording length for alpha-peak estimation, seconds.
pub const MIN_PEAK_RECORDING_S: f64 = 10.0;

/// Epochs stored as `channels × samples` matrices of equal shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EegEpochSet {
    pub epochs: Vec<Matrix>,
    pub sample_rate: f64,
    pub channel_labels: Vec<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl EegEpochSet {
    pub fn new(epochs: Vec<Matrix>, sample_rate: f64, channel_labels: Vec<String>) -> Result<Self> {
        let first = epochs.first().ok_or(Error::Empty)?;
        let (c, t) = (first.rows(), first.cols());
        if channel_labels.len() != c {
            return Err(Error::DimensionMismatch {
                expected: c,
                got: channel_labels.len(),
            });
        }
        for e in &epochs {
            if e.rows() != c || e.cols() != t {
                return Err(Error::DimensionMismatch {
                    expected: c * t,
                    got: e.rows() * e.cols(),
                });
            }
            if !e.is_finite() {
                return Err(Error::NonFinite);
            }
        }
        if !(sample_rate > 0.0) {
            return Err(invalid("sample rate must be positive"));
        }
        let mut warnings = Vec::new();
        if c < RECOMMENDED_CHANNELS {
            warnings.push(format!(
                "{c} EEG channels; {RECOMMENDED_CHANNELS} recommended for source decomposition"
            ));
        }
        if sample_rate < 250.0 {
            warnings.push(format!("EEG sampled at {sample_rate} Hz, below 250 Hz"));
        }
        Ok(Self {
            epochs,
            sample_rate,
            channel_labels,
            warnings,
        })
    }

    /// Cuts a continuous `channels × samples` recording into epochs.
    pub fn from_continuous(
        data: &Matrix,
        sample_rate: f64,
        channel_labels: Vec<String>,
        spec: &EpochSpec,
    ) -> Result<Self> {
        let ranges = epoch_ranges(data.cols(), sample_rate, spec)?;
        let epochs = ranges
            .into_iter()
            .map(|r| column_slice(data, r.start, r.end))
            .collect();
        Self::new(epochs, sample_rate, channel_labels)
    }

    pub fn channels(&self) -> usize {
        self.channel_labels.len()
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// Keeps the epochs where `mask` is true.
    pub fn select(&self, mask: &[bool]) -> Self {
        Self {
            epochs: self
                .epochs
                .iter()
                .zip(mask)
                .filter(|(_, k)| **k)
                .map(|(e, _)| e.clone())
                .collect(),
            sample_rate: self.sample_rate,
            channel_labels: self.channel_labels.clone(),
            warnings: self.warnings.clone(),
        }
    }
}

/// Columns `[start, end)` of `m`.
pub fn column_slice(m: &Matrix, start: usize, end: usize) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), end - start);
    for r in 0..m.rows() {
        out.row_mut(r).copy_from_slice(&m.row(r)[start..end]);
    }
    out
}

/// Zero-phase filters every row.
pub fn filter_rows(m: &Matrix, spec: &FilterSpec) -> Result<Matrix> {
    let f = design_filter(spec)?;
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for r in 0..m.rows() {
        let y = f.apply_zero_phase(m.row(r))?;
        out.row_mut(r).copy_from_slice(&y);
    }
    Ok(out)
}

/// Individual alpha frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaPeak {
    pub center: f64,
    /// True when no peak stood out and the 10 Hz default was used.
    pub fallback: bool,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Peaks within this relative margin count as ties; the lower one wins.
const PEAK_TIE_MARGIN: f64 = 0.05;
/// A peak must exceed the fitted power-law trend by this many robust
/// standard deviations of the log residual (and at least 1.5x).
const PEAK_SIGNIFICANCE: f64 = 3.5;

/// Largest local maximum of the channel-averaged Welch spectrum in 7–13 Hz
/// that rises clearly above a power-law (1/f) fit of the 2–40 Hz spectrum
/// outside the alpha range.
pub fn estimate_alpha_peak(data: &Matrix, sample_rate: f64) -> Result<AlphaPeak> {
    let needed = (MIN_PEAK_RECORDING_S * sample_rate).ceil() as usize;
    if data.cols() < needed {
        return Err(Error::TooShort {
            needed,
            got: data.cols(),
        });
    }
    if data.rows() == 0 {
        return Err(Error::Empty);
    }
    if !data.is_finite() {
        return Err(Error::NonFinite);
    }
    let seg = (4.0 * sample_rate).round() as usize;
    let mut avg: Option<crate::dsp::Psd> = None;
    for r in 0..data.rows() {
        let p = welch_psd(data.row(r), sample_rate, seg, 0.5)?;
        match avg.as_mut() {
            None => avg = Some(p),
            Some(a) => a
                .density
                .iter_mut()
                .zip(&p.density)
                .for_each(|(x, y)| *x += y),
        }
    }
    let psd = avg.ok_or(Error::Empty)?;
    let f = &psd.frequencies;
    let p = &psd.density;

    let fallback = |why: &str| AlphaPeak {
        center: FALLBACK_ALPHA_HZ,
        fallback: true,
        warnings: alloc::vec![format!("{why}; using {FALLBACK_ALPHA_HZ} Hz")],
    };

    let fit_hi = 40f64.min(0.45 * sample_rate);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (fk, pk) in f.iter().zip(p) {
        let outside = *fk < ALPHA_SEARCH.0 - 1.0 || *fk > ALPHA_SEARCH.1 + 1.0;
        if *fk >= 2.0 && *fk <= fit_hi && outside && *pk > 0.0 {
            xs.push(fk.log10());
            ys.push(pk.log10());
        }
    }
    if xs.len() < 4 {
        return Ok(fallback("spectrum too sparse for a trend fit"));
    }
    let (mx, my) = (crate::math::mean(&xs), crate::math::mean(&ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let trend = |fk: f64| my + slope * (fk.log10() - mx);
    let resid: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - (my + slope * (x - mx))).collect();
    let med = crate::math::median(&resid).unwrap_or(0.0);
    let abs_dev: Vec<f64> = resid.iter().map(|r| (r - med).abs()).collect();
    let sigma = 1.4826 * crate::math::median(&abs_dev).unwrap_or(0.0);
    let min_excess = (PEAK_SIGNIFICANCE * sigma).max(1.5f64.log10());

    let mut best: Option<(f64, f64)> = None;
    for k in 1..f.len() - 1 {
        let fk = f[k];
        if fk < ALPHA_SEARCH.0 || fk > ALPHA_SEARCH.1 {
            continue;
        }
        if !(p[k] > p[k - 1] && p[k] >= p[k + 1]) || p[k] <= 0.0 {
            continue;
        }
        let excess = p[k].log10() - trend(fk);
        if excess < min_excess {
            continue;
        }
        // Height above the trend in linear units.
        let height = p[k] - 10f64.powf(trend(fk));
        match best {
            Some((_, h)) if height <= h * (1.0 + PEAK_TIE_MARGIN) => {}
            _ => best = Some((fk, height)),
        }
    }
    Ok(match best {
        Some((center, _)) => AlphaPeak {
            center,
            fallback: false,
            warnings: Vec::new(),
        },
        None => fallback("no alpha peak above the 1/f trend"),
    })
}

/// Signal band `center ± 2 Hz` and the two 2 Hz flanks beside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandDefinition {
    pub center: f64,
}

impl BandDefinition {
    pub fn new(center: f64) -> Result<Self> {
        let b = Self { center };
        b.validate()?;
        Ok(b)
    }

    pub fn signal(&self) -> (f64, f64) {
        (self.center - 2.0, self.center + 2.0)
    }

    pub fn flanks(&self) -> [(f64, f64); 2] {
        [
            (self.center - 4.0, self.center - 2.0),
            (self.center + 2.0, self.center + 4.0),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.center - 4.0 > 1.0 && self.center + 4.0 < 40.0) {
            return Err(invalid(format!(
                "band around {} Hz leaves (1, 40) Hz",
                self.center
            )));
        }
        Ok(())
    }
}

/// Sample covariance of a `channels × samples` block (rows mean-removed,
/// normalized by `T − 1`).
pub fn covariance(x: &Matrix) -> Result<Matrix> {
    let (c, t) = (x.rows(), x.cols());
    if t < 2 {
        return Err(Error::TooShort { needed: 2, got: t });
    }
    if !x.is_finite() {
        return Err(Error::NonFinite);
    }
    let centred: Vec<Vec<f64>> = (0..c)
        .map(|r| {
            let row = x.row(r);
            let m = crate::math::mean(row);
            row.iter().map(|v| v - m).collect()
        })
        .collect();
    let mut out = Matrix::zeros(c, c);
    for i in 0..c {
        for j in i..c {
            let s: f64 = centred[i].iter().zip(&centred[j]).map(|(a, b)| a * b).sum();
            let v = s / (t - 1) as f64;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// `(1 − γ)·C + γ·(tr C / n)·I`.
pub fn shrink(c: &Matrix, gamma: f64) -> Result<Matrix> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(invalid("shrinkage must lie in [0, 1]"));
    }
    let n = c.rows();
    let nu = c.trace() / n as f64;
    let mut out = c.scale(1.0 - gamma);
    for i in 0..n {
        out[(i, i)] += gamma * nu;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochCovariances {
    pub per_epoch: Vec<Matrix>,
    pub mean: Matrix,
    pub warnings: Vec<String>,
}

/// Shrunk covariance of every epoch and their mean.
pub fn epoch_covariances(epochs: &[Matrix], gamma: f64) -> Result<EpochCovariances> {
    let first = epochs.first().ok_or(Error::Empty)?;
    let c = first.rows();
    let mut warnings = Vec::new();
    if first.cols() <= c {
        warnings.push(format!(
            "epochs have {} samples for {c} channels; covariances are rank deficient",
            first.cols()
        ));
    }
    let mut per_epoch = Vec::with_capacity(epochs.len());
    let mut mean = Matrix::zeros(c, c);
    for e in epochs {
        if e.rows() != c {
            return Err(Error::DimensionMismatch {
                expected: c,
                got: e.rows(),
            });
        }
        let s = shrink(&covariance(e)?, gamma)?;
        if gamma > 0.0 && !(s.trace() > 0.0) {
            return Err(degenerate("epoch has no variance"));
        }
        mean.add_assign_scaled(&s, 1.0 / epochs.len() as f64);
        per_epoch.push(s);
    }
    Ok(EpochCovariances {
        per_epoch,
        mean,
        warnings,
    })
}

/// Keeps an epoch iff every channel's peak-to-peak amplitude is below
/// `threshold` (same units as the data, typically µV).
pub fn reject_artifacts(epochs: &[Matrix], threshold: f64) -> Result<Vec<bool>> {
    if !(threshold > 0.0) {
        return Err(invalid("artifact threshold must be positive"));
    }
    Ok(epochs
        .iter()
        .map(|e| {
            (0..e.rows()).all(|r| {
                let row = e.row(r);
                let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
                hi - lo < threshold
            })
        })
        .collect())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use alloc::vec;
    use core::f64::consts::PI;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    pub fn noise(rng: &mut ChaCha8Rng, c: usize, n: usize) -> Matrix {
        let data = (0..c * n).map(|_| StandardNormal.sample(rng)).collect();
        Matrix::from_vec(c, n, data).unwrap()
    }

    /// Approximate pink noise: cumulative sum leaked toward zero, plus white.
    fn pinkish(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let mut acc = 0.0;
        (0..n)
            .map(|_| {
                let w: f64 = StandardNormal.sample(rng);
                acc = 0.98 * acc + w;
                acc + 0.5 * w
            })
            .collect()
    }

    #[test]
    fn alpha_peak_found() {
        let fs = 250.0;
        let n = 60 * 250;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let p = pinkish(&mut rng, n);
                p.iter()
                    .enumerate()
                    .map(|(i, v)| v + 3.0 * (2.0 * PI * 11.0 * i as f64 / fs).sin())
                    .collect()
            })
            .collect();
        let peak = estimate_alpha_peak(&Matrix::from_rows(&rows).unwrap(), fs).unwrap();
        assert!(!peak.fallback);
        assert!((peak.center - 11.0).abs() <= 0.5, "{}", peak.center);
    }

    #[test]
    fn white_noise_falls_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let peak = estimate_alpha_peak(&noise(&mut rng, 4, 30 * 250), 250.0).unwrap();
        assert!(peak.fallback);
        assert_eq!(peak.center, 10.0);
        assert_eq!(peak.warnings.len(), 1);
    }

    #[test]
    fn equal_peaks_prefer_lower() {
        let fs = 256.0;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let base = noise(&mut rng, 2, 40 * 256);
        let rows: Vec<Vec<f64>> = (0..2)
            .map(|r| {
                base.row(r)
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        let t = i as f64 / fs;
                        0.1 * v + (2.0 * PI * 9.0 * t).sin() + (2.0 * PI * 12.0 * t).sin()
                    })
                    .collect()
            })
            .collect();
        let peak = estimate_alpha_peak(&Matrix::from_rows(&rows).unwrap(), fs).unwrap();
        assert_eq!(peak.center, 9.0);
    }

    #[test]
    fn short_recording_errors() {
        assert!(matches!(
            estimate_alpha_peak(&Matrix::zeros(2, 100), 250.0),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn white_covariance_near_identity() {
        // Monte-Carlo oracle: entries of a 4x4 sample covariance from 20k
        // unit-variance draws have std ≈ 1/sqrt(20k) ≈ 0.007.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = epoch_covariances(&[noise(&mut rng, 4, 20_000)], 0.0).unwrap();
        assert!(c.mean.max_abs_diff(&Matrix::identity(4)) < 0.04);
    }

    #[test]
    fn full_shrinkage_is_scaled_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = noise(&mut rng, 3, 50);
        let c = covariance(&x).unwrap();
        let s = shrink(&c, 1.0).unwrap();
        let nu = c.trace() / 3.0;
        assert!(s.max_abs_diff(&Matrix::identity(3).scale(nu)) < 1e-15);
    }

    #[test]
    fn rank_deficient_becomes_pd() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = noise(&mut rng, 8, 4);
        let c = epoch_covariances(&[x], 0.1).unwrap();
        assert_eq!(c.warnings.len(), 1);
        let eig = crate::linalg::symmetric_eigen(&c.per_epoch[0]).unwrap();
        assert!(*eig.values.last().unwrap() > 0.0);
    }

    #[test]
    fn artifact_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut epochs: Vec<Matrix> = (0..5).map(|_| noise(&mut rng, 3, 250).scale(10.0)).collect();
        assert!(reject_artifacts(&epochs, 150.0).unwrap().iter().all(|k| *k));
        epochs[2][(1, 100)] += 500.0;
        let keep = reject_artifacts(&epochs, 150.0).unwrap();
        assert_eq!(keep, vec![true, true, false, true, true]);
        assert!(reject_artifacts(&epochs, f64::INFINITY)
            .unwrap()
            .iter()
            .all(|k| *k));
    }

    #[test]
    fn bands() {
        let b = BandDefinition::new(10.0).unwrap();
        assert_eq!(b.signal(), (8.0, 12.0));
        assert_eq!(b.flanks(), [(6.0, 8.0), (12.0, 14.0)]);
        assert!(BandDefinition::new(4.0).is_err());
    }
}
