//! Facial EMG affect: preprocessing chain, inter-muscle RBF kernel features,
//! embedding projection and a late-fusion head over seven emotion classes.

pub mod model;

#[allow(unused_imports)]
use num_traits::Float;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dsp::{design_chain, FilterSpec, SosFilter, DEFAULT_NOTCH_HARMONICS};
use crate::error::{degenerate, invalid, Error, Result};
use crate::linalg::Matrix;

pub use model::{train_head, Activation, HeadModel, ProjectionModel, TrainConfig, TrainReport};

pub const EMG_CHANNELS: usize = 7;
pub const MIN_EMG_RATE: f64 = 800.0;
pub const WINDOW_S: f64 = 1.0;
pub const HOP_S: f64 = 0.25;
pub const EMBEDDING_DIM: usize = 128;
pub const FUSED_DIM: usize = 2 * EMBEDDING_DIM;
/// Off-diagonal upper-triangle entries of the 7×7 kernel.
pub const KERNEL_FEATURES: usize = EMG_CHANNELS * (EMG_CHANNELS - 1) / 2;
pub const DEFAULT_CLIP_PERCENTILE: f64 = 99.5;
pub const MAINS_HZ: f64 = 50.0;
pub const EMG_BAND: (f64, f64) = (100.0, 400.0);
/// Fill value for channels with no dynamic range after rectification.
pub const DEGENERATE_FILL: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emotion {
    Anger,
    Disgust,
    Fear,
    Happiness,
    Sadness,
    Surprise,
    Neutral,
}

impl Emotion {
    pub const ALL: [Emotion; 7] = [
        Emotion::Anger,
        Emotion::Disgust,
        Emotion::Fear,
        Emotion::Happiness,
        Emotion::Sadness,
        Emotion::Surprise,
        Emotion::Neutral,
    ];
}

/// Mains notches (50 Hz and harmonics below Nyquist) followed by the EMG
/// band-pass. The upper band edge is lowered to 0.45 of the sample rate when
/// 400 Hz would sit at or above Nyquist.
pub fn emg_filter(sample_rate: f64) -> Result<SosFilter> {
    if !(sample_rate >= MIN_EMG_RATE) {
        return Err(invalid(alloc::format!(
            "EMG needs at least {MIN_EMG_RATE} Hz, got {sample_rate}"
        )));
    }
    let mut specs = FilterSpec::mains_notch(MAINS_HZ, DEFAULT_NOTCH_HARMONICS, sample_rate);
    let hi = EMG_BAND.1.min(0.45 * sample_rate);
    specs.push(FilterSpec::bandpass(EMG_BAND.0, hi, sample_rate));
    design_chain(&specs)
}

fn filter_channels(raw: &Matrix, sample_rate: f64) -> Result<Matrix> {
    if raw.rows() != EMG_CHANNELS {
        return Err(Error::DimensionMismatch {
            expected: EMG_CHANNELS,
            got: raw.rows(),
        });
    }
    let filter = emg_filter(sample_rate)?;
    let mut out = Matrix::zeros(raw.rows(), raw.cols());
    for c in 0..raw.rows() {
        let y = filter.apply_zero_phase(raw.row(c))?;
        out.row_mut(c).copy_from_slice(&y);
    }
    Ok(out)
}

/// Per-channel statistics of a resting recording after filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmgBaseline {
    pub mean: Vec<f64>,
    /// Absolute amplitude at `clip_percentile`, after baseline subtraction.
    pub clip_level: Vec<f64>,
    pub clip_percentile: f64,
}

impl EmgBaseline {
    pub fn from_recording(raw: &Matrix, sample_rate: f64, clip_percentile: f64) -> Result<Self> {
        if !(0.0..=100.0).contains(&clip_percentile) {
            return Err(invalid("clip percentile must lie in [0, 100]"));
        }
        let filtered = filter_channels(raw, sample_rate)?;
        let mut mean = Vec::with_capacity(EMG_CHANNELS);
        let mut clip_level = Vec::with_capacity(EMG_CHANNELS);
        for c in 0..EMG_CHANNELS {
            let row = filtered.row(c);
            let m = crate::math::mean(row);
            let dev: Vec<f64> = row.iter().map(|v| (v - m).abs()).collect();
            mean.push(m);
            clip_level.push(crate::math::percentile(&dev, clip_percentile).ok_or(Error::Empty)?);
        }
        Ok(Self {
            mean,
            clip_level,
            clip_percentile,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmgWindow {
    pub t0: f64,
    pub sample_rate: f64,
    /// 7 × N, each channel in [0, 1].
    pub data: Matrix,
    /// Channels without dynamic range, filled with 0.5.
    pub degenerate_channels: Vec<usize>,
}

/// Notch, band-pass, baseline subtraction, clipping, full-wave
/// rectification and min-max scaling, in that order, per channel.
pub fn preprocess_emg(
    raw: &Matrix,
    sample_rate: f64,
    t0: f64,
    baseline: Option<&EmgBaseline>,
) -> Result<EmgWindow> {
    let baseline =
        baseline.ok_or_else(|| Error::MissingCalibration("EMG baseline statistics".into()))?;
    if baseline.mean.len() != EMG_CHANNELS || baseline.clip_level.len() != EMG_CHANNELS {
        return Err(Error::DimensionMismatch {
            expected: EMG_CHANNELS,
            got: baseline.mean.len(),
        });
    }
    let filtered = filter_channels(raw, sample_rate)?;
    let mut data = Matrix::zeros(EMG_CHANNELS, raw.cols());
    let mut degenerate_channels = Vec::new();
    for c in 0..EMG_CHANNELS {
        let clip = baseline.clip_level[c];
        let rect: Vec<f64> = filtered
            .row(c)
            .iter()
            .map(|v| {
                let centred = v - baseline.mean[c];
                let clipped = if clip > 0.0 { centred.clamp(-clip, clip) } else { centred };
                clipped.abs()
            })
            .collect();
        match crate::dsp::minmax_scale(&rect) {
            Ok(scaled) => data.row_mut(c).copy_from_slice(&scaled),
            Err(Error::Degenerate(_)) => {
                degenerate_channels.push(c);
                data.row_mut(c).fill(DEGENERATE_FILL);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(EmgWindow {
        t0,
        sample_rate,
        data,
        degenerate_channels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelFeature {
    pub k: Matrix,
    /// Upper triangle without the diagonal, row by row.
    pub vector: Vec<f64>,
    pub bandwidth: f64,
}

/// Gaussian kernel between channel sample vectors,
/// `K[i][j] = exp(−‖xᵢ − xⱼ‖² / (2σ²))`. Without an explicit bandwidth σ
/// is the median pairwise distance, falling back to the largest distance
/// and then to 1 when channels coincide.
pub fn rbf_kernel(data: &Matrix, bandwidth: Option<f64>) -> Result<KernelFeature> {
    let (c, n) = (data.rows(), data.cols());
    if n < 2 {
        return Err(Error::TooShort { needed: 2, got: n });
    }
    let mut d2 = Matrix::zeros(c, c);
    let mut dists = Vec::with_capacity(c * (c - 1) / 2);
    for i in 0..c {
        for j in i + 1..c {
            let s: f64 = data
                .row(i)
                .iter()
                .zip(data.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d2[(i, j)] = s;
            d2[(j, i)] = s;
            dists.push(s.sqrt());
        }
    }
    let sigma = match bandwidth {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(_) => return Err(invalid("kernel bandwidth must be positive")),
        None => {
            let med = crate::math::median(&dists).unwrap_or(0.0);
            let max = dists.iter().copied().fold(0.0, f64::max);
            if med > 0.0 {
                med
            } else if max > 0.0 {
                max
            } else {
                1.0
            }
        }
    };
    let mut k = Matrix::identity(c);
    let mut vector = Vec::with_capacity(c * (c - 1) / 2);
    for i in 0..c {
        for j in i + 1..c {
            let v = (-d2[(i, j)] / (2.0 * sigma * sigma)).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
            vector.push(v);
        }
    }
    Ok(KernelFeature {
        k,
        vector,
        bandwidth: sigma,
    })
}

/// Which modalities contributed to a fused vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalityMask {
    pub visual: bool,
    pub emg: bool,
}

/// Concatenates (visual, emg) embeddings, zero-filling an absent one.
pub fn fuse(visual: Option<&[f64]>, emg: Option<&[f64]>) -> Result<(Vec<f64>, ModalityMask)> {
    if visual.is_none() && emg.is_none() {
        return Err(invalid("fusion needs at least one modality"));
    }
    let mut fused = alloc::vec![0.0; FUSED_DIM];
    for (offset, part) in [(0, visual), (EMBEDDING_DIM, emg)] {
        if let Some(v) = part {
            if v.len() != EMBEDDING_DIM {
                return Err(Error::DimensionMismatch {
                    expected: EMBEDDING_DIM,
                    got: v.len(),
                });
            }
            fused[offset..offset + EMBEDDING_DIM].copy_from_slice(v);
        }
    }
    Ok((
        fused,
        ModalityMask {
            visual: visual.is_some(),
            emg: emg.is_some(),
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionProbs {
    /// In the order of `Emotion::ALL`.
    pub probabilities: Vec<f64>,
    pub mask: ModalityMask,
}

impl EmotionProbs {
    /// Most probable emotion; ties go to the earlier class.
    pub fn top(&self) -> Emotion {
        Emotion::ALL[crate::math::argmax(&self.probabilities).unwrap_or(6)]
    }
}

pub fn fuse_and_classify(
    visual: Option<&[f64]>,
    emg: Option<&[f64]>,
    head: &HeadModel,
) -> Result<EmotionProbs> {
    let (x, mask) = fuse(visual, emg)?;
    Ok(EmotionProbs {
        probabilities: head.predict(&x)?,
        mask,
    })
}

/// Source of 128-D visual embeddings for aligned windows, e.g. an external
/// face model service.
pub trait VisualEmbeddingProvider {
    fn embedding(&mut self, t0: f64, t1: f64) -> Option<Vec<f64>>;
}

/// Full per-window EMG path: preprocessing, kernel and projection.
pub fn emg_embedding(
    raw: &Matrix,
    sample_rate: f64,
    t0: f64,
    baseline: Option<&EmgBaseline>,
    projection: &ProjectionModel,
) -> Result<(EmgWindow, KernelFeature, Vec<f64>)> {
    let window = preprocess_emg(raw, sample_rate, t0, baseline)?;
    let kernel = rbf_kernel(&window.data, None)?;
    let embedding = projection.project(&kernel.vector)?;
    Ok((window, kernel, embedding))
}

/// Rejects kernels that break symmetry, unit diagonal, range or PSD.
pub fn check_kernel(k: &Matrix, tol: f64) -> Result<()> {
    let n = k.rows();
    for i in 0..n {
        if (k[(i, i)] - 1.0).abs() > tol {
            return Err(degenerate("kernel diagonal is not 1"));
        }
        for j in 0..n {
            if (k[(i, j)] - k[(j, i)]).abs() > tol || !(k[(i, j)] > 0.0 && k[(i, j)] <= 1.0) {
                return Err(degenerate("kernel entry out of range or asymmetric"));
            }
        }
    }
    let eig = crate::linalg::symmetric_eigen(k)?;
    if eig.values.iter().any(|v| *v < -tol) {
        return Err(degenerate(String::from("kernel is not positive semidefinite")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const FS: f64 = 1000.0;

    fn random_raw(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        let mut m = Matrix::zeros(EMG_CHANNELS, n);
        for c in 0..EMG_CHANNELS {
            for s in 0..n {
                m[(c, s)] = rng.random_range(-1.0..1.0) * (1.0 + c as f64);
            }
        }
        m
    }

    fn baseline(rng: &mut ChaCha8Rng) -> EmgBaseline {
        EmgBaseline::from_recording(&random_raw(rng, 5000), FS, DEFAULT_CLIP_PERCENTILE).unwrap()
    }

    #[test]
    fn mains_is_notched() {
        let f = emg_filter(FS).unwrap();
        let x: Vec<f64> = (0..4000).map(|i| (2.0 * PI * 50.0 * i as f64 / FS).sin()).collect();
        let notch = design_chain(&FilterSpec::mains_notch(MAINS_HZ, DEFAULT_NOTCH_HARMONICS, FS)).unwrap();
        let y = notch.apply_zero_phase(&x).unwrap();
        let peak = y[1000..3000].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak <= 0.032, "{peak}");
        assert!(f.is_stable());
        assert!(emg_filter(500.0).is_err());
        assert!(emg_filter(800.0).is_ok());
    }

    #[test]
    fn chain_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = baseline(&mut rng);
        let mut raw = random_raw(&mut rng, 1000);
        raw.row_mut(3).fill(0.0);
        let w = preprocess_emg(&raw, FS, 2.0, Some(&b)).unwrap();
        assert_eq!(w.degenerate_channels, [3]);
        assert!(w.data.row(3).iter().all(|v| *v == DEGENERATE_FILL));
        assert!(w.data.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        let neg = raw.scale(-1.0);
        let b0 = EmgBaseline {
            mean: alloc::vec![0.0; 7],
            ..b.clone()
        };
        let a = preprocess_emg(&raw, FS, 2.0, Some(&b0)).unwrap();
        let c = preprocess_emg(&neg, FS, 2.0, Some(&b0)).unwrap();
        assert!(a.data.max_abs_diff(&c.data) < 1e-12);
        assert!(matches!(
            preprocess_emg(&raw, FS, 0.0, None),
            Err(Error::MissingCalibration(_))
        ));
    }

    #[test]
    fn kernel_limits() {
        let mut m = Matrix::zeros(EMG_CHANNELS, 10);
        for c in 0..EMG_CHANNELS {
            m.row_mut(c).fill(c as f64 * 1e3);
        }
        m.row_mut(1).fill(0.0);
        let k = rbf_kernel(&m, Some(1.0)).unwrap();
        assert_eq!(k.k[(0, 1)], 1.0);
        assert!(k.k[(0, 6)] < 1e-300);
        assert_eq!(k.vector.len(), KERNEL_FEATURES);
        assert!(rbf_kernel(&Matrix::zeros(7, 1), None).is_err());
        let same = rbf_kernel(&Matrix::zeros(7, 5), None).unwrap();
        assert!(same.vector.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn fusion_masks() {
        let head = HeadModel::zeros(FUSED_DIM, 0, 7);
        let e = alloc::vec![0.3; EMBEDDING_DIM];
        let p = fuse_and_classify(None, Some(&e), &head).unwrap();
        assert!(p.probabilities.iter().all(|v| (v - 1.0 / 7.0).abs() < 1e-15));
        assert!(!p.mask.visual && p.mask.emg);
        assert_eq!(p.top(), Emotion::Anger);
        assert!(fuse_and_classify(None, None, &head).is_err());
        assert!(fuse(Some(&e[..100]), None).is_err());
        let (v, _) = fuse(Some(&e), None).unwrap();
        assert!(v[EMBEDDING_DIM..].iter().all(|x| *x == 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn kernel_invariants(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = baseline(&mut rng);
            let raw = random_raw(&mut rng, 800);
            let w = preprocess_emg(&raw, 800.0, 0.0, Some(&b)).unwrap();
            let k = rbf_kernel(&w.data, None).unwrap();
            prop_assert!(check_kernel(&k.k, 1e-9).is_ok());
        }
    }
}
