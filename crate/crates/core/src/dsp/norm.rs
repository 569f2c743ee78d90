//! Normalization and rectification.

use alloc::vec::Vec;

use crate::error::{degenerate, Error, Result};
use crate::math::{mean, std_dev};

/// Standard score using the population standard deviation.
pub fn zscore(signal: &[f64]) -> Result<Vec<f64>> {
    if signal.is_empty() {
        return Err(Error::Empty);
    }
    let m = mean(signal);
    let s = std_dev(signal);
    if !(s > 0.0) || !s.is_finite() {
        return Err(degenerate("zero variance"));
    }
    Ok(signal.iter().map(|v| (v - m) / s).collect())
}

pub fn rectify(signal: &[f64]) -> Vec<f64> {
    signal.iter().map(|v| v.abs()).collect()
}

/// Scales to `[0, 1]` by the observed range.
pub fn minmax_scale(signal: &[f64]) -> Result<Vec<f64>> {
    if signal.is_empty() {
        return Err(Error::Empty);
    }
    let lo = signal.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = signal.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(degenerate("constant input to min-max scaling"));
    }
    let span = hi - lo;
    Ok(signal.iter().map(|v| (v - lo) / span).collect())
}

/// Removes the least-squares line.
pub fn detrend_linear(signal: &[f64]) -> Vec<f64> {
    let n = signal.len();
    if n < 2 {
        return signal.iter().map(|_| 0.0).collect();
    }
    let tm = (n - 1) as f64 / 2.0;
    let ym = mean(signal);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, y) in signal.iter().enumerate() {
        let dx = i as f64 - tm;
        sxy += dx * (y - ym);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    signal
        .iter()
        .enumerate()
        .map(|(i, y)| y - ym - slope * (i as f64 - tm))
        .collect()
}
