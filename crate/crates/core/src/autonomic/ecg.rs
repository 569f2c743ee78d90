//! R-peak detection in the Pan-Tompkins style.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use crate::dsp::{design_filter, zscore, FilterSpec};
use crate::error::{Error, Result};

pub const HIGHPASS_HZ: f64 = 0.5;
pub const REFRACTORY_S: f64 = 0.25;
const QRS_BAND: (f64, f64) = (5.0, 15.0);
const INTEGRATION_S: f64 = 0.15;
const T_WAVE_WINDOW_S: f64 = 0.36;
const REFINE_S: f64 = 0.12;

/// R-peak times in seconds from the first sample.
///
/// Detection runs on a 5–15 Hz branch (derivative, squaring, 150 ms moving
/// integration, adaptive dual threshold with search-back); each detection is
/// then placed on the maximum of the 0.5 Hz high-passed, z-scored ECG.
/// A constant input has no peaks.
pub fn detect_r_peaks(ecg: &[f64], sample_rate: f64) -> Result<Vec<f64>> {
    let needed = (2.0 * sample_rate).ceil() as usize;
    if ecg.len() < needed {
        return Err(Error::TooShort {
            needed,
            got: ecg.len(),
        });
    }
    let z = match zscore(ecg) {
        Ok(z) => z,
        Err(Error::Degenerate(_)) => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let fs = sample_rate;
    let hp = design_filter(&FilterSpec::highpass(HIGHPASS_HZ, fs).with_order(2))?
        .apply_zero_phase(&z)?;
    let high = QRS_BAND.1.min(0.45 * fs);
    let band = design_filter(&FilterSpec::bandpass(QRS_BAND.0, high, fs).with_order(2))?
        .apply_zero_phase(&z)?;

    let slope = derivative(&band, fs);
    let squared: Vec<f64> = slope.iter().map(|d| d * d).collect();
    let mwi = moving_average(&squared, ((INTEGRATION_S * fs).round() as usize).max(1));

    let detections = threshold(&mwi, &slope, fs);
    let reach = (REFINE_S * fs).round() as usize;
    let refractory = (REFRACTORY_S * fs).round() as usize;
    let mut peaks: Vec<(usize, f64)> = Vec::new();
    for d in detections {
        let lo = d.saturating_sub(reach);
        let hi = (d + reach).min(hp.len() - 1);
        let r = (lo..=hi)
            .max_by(|&a, &b| hp[a].total_cmp(&hp[b]).then(b.cmp(&a)))
            .unwrap_or(d);
        match peaks.last_mut() {
            Some(last) if r < last.0 + refractory => {
                if hp[r] > last.1 {
                    *last = (r, hp[r]);
                }
            }
            _ => peaks.push((r, hp[r])),
        }
    }
    Ok(peaks
        .into_iter()
        .map(|(i, _)| vertex(&hp, i) / fs)
        .collect())
}

/// Five-point centred derivative.
fn derivative(x: &[f64], fs: f64) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n];
    for i in 2..n.saturating_sub(2) {
        d[i] = (2.0 * x[i + 2] + x[i + 1] - x[i - 1] - 2.0 * x[i - 2]) * fs / 8.0;
    }
    d
}

/// Centred moving average of width `w`.
fn moving_average(x: &[f64], w: usize) -> Vec<f64> {
    let n = x.len();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + x[i];
    }
    let half = w / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + w - half).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

struct Candidate {
    idx: usize,
    height: f64,
    slope: f64,
}

/// Adaptive thresholding over the local maxima of the integrated signal.
fn threshold(mwi: &[f64], slope: &[f64], fs: f64) -> Vec<usize> {
    let n = mwi.len();
    let refractory = (REFRACTORY_S * fs).round() as usize;
    let t_wave = (T_WAVE_WINDOW_S * fs).round() as usize;
    let half_qrs = (0.075 * fs).round() as usize;
    let max_slope = |i: usize| {
        let lo = i.saturating_sub(half_qrs);
        let hi = (i + half_qrs).min(n - 1);
        slope[lo..=hi].iter().fold(0.0f64, |m, v| m.max(v.abs()))
    };
    let candidates: Vec<Candidate> = (1..n - 1)
        .filter(|&i| mwi[i] > mwi[i - 1] && mwi[i] >= mwi[i + 1])
        .map(|i| Candidate {
            idx: i,
            height: mwi[i],
            slope: max_slope(i),
        })
        .collect();

    let learn = ((2.0 * fs) as usize).min(n);
    let init_max = mwi[..learn].iter().fold(0.0f64, |m, v| m.max(*v));
    let init_mean = mwi[..learn].iter().sum::<f64>() / learn as f64;
    let mut spk = init_max / 3.0;
    let mut npk = init_mean / 2.0;
    let mut thr = npk + 0.25 * (spk - npk);

    let mut accepted: Vec<usize> = Vec::new();
    let mut last_slope = 0.0;
    let mut rr: Vec<usize> = Vec::new();
    let mut last_pos = 0usize;

    for (ci, c) in candidates.iter().enumerate() {
        if let (Some(&last), false) = (accepted.last(), rr.is_empty()) {
            let avg = rr.iter().rev().take(8).sum::<usize>() as f64 / rr.len().min(8) as f64;
            if (c.idx - last) as f64 > 1.66 * avg {
                let missed = candidates[last_pos..ci]
                    .iter()
                    .filter(|m| m.idx > last + refractory && m.idx + refractory < c.idx)
                    .filter(|m| m.height > 0.5 * thr)
                    .max_by(|a, b| a.height.total_cmp(&b.height));
                if let Some(m) = missed {
                    spk = 0.25 * m.height + 0.75 * spk;
                    rr.push(m.idx - last);
                    accepted.push(m.idx);
                    last_slope = m.slope;
                    thr = npk + 0.25 * (spk - npk);
                }
            }
        }
        let last = accepted.last().copied();
        let in_refractory = last.is_some_and(|l| c.idx < l + refractory);
        let is_t_wave = last.is_some_and(|l| c.idx < l + t_wave && c.slope < 0.5 * last_slope);
        if c.height > thr && !in_refractory && !is_t_wave {
            spk = 0.125 * c.height + 0.875 * spk;
            if let Some(l) = last {
                rr.push(c.idx - l);
            }
            accepted.push(c.idx);
            last_slope = c.slope;
            last_pos = ci + 1;
        } else {
            npk = 0.125 * c.height + 0.875 * npk;
        }
        thr = npk + 0.25 * (spk - npk);
    }
    accepted
}

fn vertex(x: &[f64], i: usize) -> f64 {
    if i == 0 || i + 1 >= x.len() {
        return i as f64;
    }
    let (a, b, c) = (x[i - 1], x[i], x[i + 1]);
    let den = a - 2.0 * b + c;
    if den.abs() < f64::EPSILON {
        return i as f64;
    }
    i as f64 + (0.5 * (a - c) / den).clamp(-0.5, 0.5)
}
