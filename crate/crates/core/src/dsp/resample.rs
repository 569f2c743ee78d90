//! Block decimation and linear interpolation helpers.

use alloc::vec::Vec;

/// Averages consecutive blocks of `factor` samples; a trailing partial block
/// is dropped. Output sample `i` is centred at input index
/// `i·factor + (factor − 1)/2`.
pub fn block_mean(signal: &[f64], factor: usize) -> Vec<f64> {
    let factor = factor.max(1);
    signal
        .chunks_exact(factor)
        .map(|c| c.iter().sum::<f64>() / factor as f64)
        .collect()
}

/// Linear interpolation of the samples `(xs, ys)` at `x`, holding the end
/// values outside the range. `xs` must be increasing and non-empty.
pub fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let i = xs.partition_point(|&v| v <= x);
    if i == 0 {
        return ys[0];
    }
    if i >= xs.len() {
        return ys[xs.len() - 1];
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    let w = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
    ys[i - 1] + (ys[i] - ys[i - 1]) * w
}
