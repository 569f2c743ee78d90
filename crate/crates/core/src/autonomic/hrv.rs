//! R-R interval correction and windowed RMSSD.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::median;

pub const HRV_WINDOW_S: f64 = 5.0;
/// Relative deviation from the local median that flags an interval.
pub const ECTOPIC_TOLERANCE: f64 = 0.3;
/// Width of the local-median window, including the interval itself.
pub const LOCAL_WINDOW: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrvWindow {
    pub t0: f64,
    pub t1: f64,
    /// Milliseconds; absent with fewer than three intervals.
    pub rmssd: Option<f64>,
    pub n_intervals: usize,
}

/// Root mean square of successive differences; `None` below three intervals.
pub fn rmssd(rr_ms: &[f64]) -> Option<f64> {
    if rr_ms.len() < 3 {
        return None;
    }
    let sum: f64 = rr_ms.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum();
    Some((sum / (rr_ms.len() - 1) as f64).sqrt())
}

fn window(n: usize, i: usize) -> (usize, usize) {
    let lo = i.saturating_sub(LOCAL_WINDOW / 2).min(n.saturating_sub(LOCAL_WINDOW));
    (lo, (lo + LOCAL_WINDOW).min(n))
}

/// Repairs missed and extra beats.
///
/// An interval is flagged when it differs from the median of its five-wide
/// window by more than 30%. A flagged interval close to an integer multiple
/// (at least 2) of that median is split evenly; a run of short flagged
/// intervals whose sum is close to the median is merged; any other flagged
/// interval is replaced by the median of the unflagged intervals in its
/// window.
pub fn correct_rr(rr_ms: &[f64]) -> Result<Vec<f64>> {
    let n = rr_ms.len();
    if n < 3 {
        return Err(Error::TooShort { needed: 3, got: n });
    }
    let local: Vec<f64> = (0..n)
        .map(|i| {
            let (lo, hi) = window(n, i);
            median(&rr_ms[lo..hi]).unwrap_or(rr_ms[i])
        })
        .collect();
    let flagged: Vec<bool> = (0..n)
        .map(|i| (rr_ms[i] - local[i]).abs() > ECTOPIC_TOLERANCE * local[i])
        .collect();

    let mut out = Vec::with_capacity(n + 2);
    let mut i = 0;
    while i < n {
        let x = rr_ms[i];
        let med = local[i];
        if !flagged[i] {
            out.push(x);
            i += 1;
            continue;
        }
        let ratio = x / med;
        let k = ratio.round();
        if k >= 2.0 && (ratio - k).abs() <= ECTOPIC_TOLERANCE {
            for _ in 0..k as usize {
                out.push(x / k);
            }
            i += 1;
            continue;
        }
        if x < med {
            let mut sum = x;
            let mut merged = None;
            for j in i + 1..n {
                if !flagged[j] {
                    break;
                }
                sum += rr_ms[j];
                if (sum - med).abs() <= ECTOPIC_TOLERANCE * med {
                    merged = Some(j);
                    break;
                }
                if sum > med {
                    break;
                }
            }
            if let Some(j) = merged {
                out.push(sum);
                i = j + 1;
                continue;
            }
        }
        let (lo, hi) = window(n, i);
        let clean: Vec<f64> = (lo..hi).filter(|&j| !flagged[j]).map(|j| rr_ms[j]).collect();
        out.push(median(&clean).unwrap_or(med));
        i += 1;
    }
    Ok(out)
}

/// RMSSD over consecutive non-overlapping windows covering `[t_start, t_end)`.
/// Each interval belongs to the window containing its closing beat. The
/// intervals are corrected first when there are at least three.
pub fn hrv_windows(r_peaks: &[f64], t_start: f64, t_end: f64, window_s: f64) -> Vec<HrvWindow> {
    let mut beats: Vec<(f64, f64)> = Vec::new();
    if r_peaks.len() >= 2 {
        let raw: Vec<f64> = r_peaks.windows(2).map(|w| (w[1] - w[0]) * 1000.0).collect();
        let rr = correct_rr(&raw).unwrap_or(raw);
        let mut t = r_peaks[0];
        for v in rr {
            t += v / 1000.0;
            beats.push((t, v));
        }
    }
    let mut out = Vec::new();
    if !(window_s > 0.0) {
        return out;
    }
    let mut t0 = t_start;
    while t0 + window_s <= t_end + 1e-9 {
        let t1 = t0 + window_s;
        let rr: Vec<f64> = beats
            .iter()
            .filter(|(t, _)| *t >= t0 && *t < t1)
            .map(|(_, v)| *v)
            .collect();
        out.push(HrvWindow {
            t0,
            t1,
            rmssd: rmssd(&rr),
            n_intervals: rr.len(),
        });
        t0 = t1;
    }
    out
}
