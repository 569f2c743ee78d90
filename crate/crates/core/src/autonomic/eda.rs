//! Electrodermal activity: phasic extraction and skin-conductance responses.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dsp::{block_mean, design_filter, detrend_linear, zscore, FilterSpec};
use crate::error::{invalid, Result};
use crate::sync::EventMarker;

/// Phasic band edges in Hz.
pub const PHASIC_BAND: (f64, f64) = (0.0159, 0.5);
/// Default minimum trough-to-peak rise for an SCR, z-units.
pub const DEFAULT_MIN_AMPLITUDE: f64 = 0.05;
/// Post-marker window (seconds) in which a peak is attributed to the marker.
pub const EVENT_WINDOW: (f64, f64) = (1.0, 5.0);
/// Widens `EVENT_WINDOW` on both sides by the timing error of an estimated
/// peak, so that responses planted at the window edges stay attributed.
pub const PEAK_TIME_SLACK_S: f64 = 0.1;
/// Recordings shorter than this give unreliable z-scores.
pub const MIN_RECOMMENDED_S: f64 = 60.0;

/// Working rate after block decimation; EDA content is far below 1 Hz.
const TARGET_RATE: f64 = 16.0;
const ONSET_LOWPASS_HZ: f64 = 2.0;
/// Onset is where the fast trace first rises this fraction above its foot.
const ONSET_FRACTION: f64 = 0.05;
/// A peak within this many seconds of a larger response, separated from it
/// by a dip shallower than `RINGING_RATIO` of that response, is filter
/// ringing rather than a response of its own.
/// Half-width of the parabola fitted to locate a crest.
const CREST_FIT_S: f64 = 0.25;
const RINGING_WINDOW_S: f64 = 5.0;
const RINGING_RATIO: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdaPhasic {
    /// Rate of `signal` and `onset_trace` after decimation.
    pub sample_rate: f64,
    /// Time of the first output sample relative to the input's first sample.
    pub start: f64,
    /// Band-passed phasic component (z-units).
    pub signal: Vec<f64>,
    /// Detrended, lightly low-passed trace used to time onsets and peaks.
    pub onset_trace: Vec<f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl EdaPhasic {
    pub fn time(&self, index: f64) -> f64 {
        self.start + index / self.sample_rate
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.signal.len()).map(|i| self.time(i as f64)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScrEvent {
    pub onset: f64,
    pub peak: f64,
    /// Trough-to-peak rise of the phasic component, z-units.
    pub amplitude: f64,
    pub event_locked_to: Option<String>,
}

/// Z-scores the raw conductance, removes the linear trend and band-passes the
/// result to the phasic band.
///
/// The signal is block-averaged to roughly 16 Hz first so the 0.0159 Hz
/// corner is well conditioned.
pub fn extract_phasic(eda: &[f64], sample_rate: f64) -> Result<EdaPhasic> {
    if !(sample_rate > 0.0) {
        return Err(invalid("sample rate must be positive"));
    }
    let z = zscore(eda)?;
    let mut warnings = Vec::new();
    let duration = eda.len() as f64 / sample_rate;
    if duration < MIN_RECOMMENDED_S {
        warnings.push(format!(
            "EDA recording is {duration:.1} s; z-scores need at least {MIN_RECOMMENDED_S} s"
        ));
    }
    let factor = ((sample_rate / TARGET_RATE).floor() as usize).max(1);
    let rate = sample_rate / factor as f64;
    let start = (factor - 1) as f64 / (2.0 * sample_rate);
    let dec = detrend_linear(&block_mean(&z, factor));

    let bp = design_filter(&FilterSpec::bandpass(PHASIC_BAND.0, PHASIC_BAND.1, rate))?;
    let pad = (60.0 * rate) as usize;
    let signal = bp.apply_zero_phase_padded(&dec, pad)?;

    let lp_corner = ONSET_LOWPASS_HZ.min(0.4 * rate);
    let lp = design_filter(&FilterSpec::lowpass(lp_corner, rate))?;
    let onset_trace = lp.apply_zero_phase_padded(&dec, pad)?;

    Ok(EdaPhasic {
        sample_rate: rate,
        start,
        signal,
        onset_trace,
        warnings,
    })
}

/// Finds SCRs whose trough-to-peak rise is at least `min_amplitude` on both
/// the phasic component and the onset trace, and attributes each to the
/// latest marker between 1 and 5 s before its peak, give or take
/// `PEAK_TIME_SLACK_S`. Small peaks that barely
/// separate from a nearby larger response are dropped as filter ringing.
/// Marker times share the origin of the input signal.
pub fn detect_scr_peaks(
    phasic: &EdaPhasic,
    min_amplitude: f64,
    markers: &[EventMarker],
) -> Vec<ScrEvent> {
    let y = &phasic.signal;
    let u = &phasic.onset_trace;
    let n = y.len();
    let rate = phasic.sample_rate;
    let mut out = Vec::new();
    if n < 3 {
        return out;
    }
    let mut found: Vec<(usize, ScrEvent)> = Vec::new();
    let mut floor = 0usize;
    for i in 1..n - 1 {
        if !(y[i] > y[i - 1] && y[i] >= y[i + 1]) {
            continue;
        }
        let trough = (floor..i)
            .min_by(|&a, &b| y[a].total_cmp(&y[b]))
            .unwrap_or(floor);
        let amplitude = y[i] - y[trough];
        if amplitude < min_amplitude {
            continue;
        }
        let (onset_idx, peak_idx, rise) = refine(u, trough, i, floor, rate);
        // Band-pass ringing around a large response forms phasic peaks with
        // no matching rise on the onset trace.
        if rise < min_amplitude {
            continue;
        }
        let peak = phasic.time(peak_idx);
        let event_locked_to = markers
            .iter()
            .filter(|m| {
                let d = peak - m.t;
                d >= EVENT_WINDOW.0 - PEAK_TIME_SLACK_S && d <= EVENT_WINDOW.1 + PEAK_TIME_SLACK_S
            })
            .max_by(|a, b| a.t.total_cmp(&b.t))
            .map(|m| m.label.clone());
        found.push((
            i,
            ScrEvent {
                onset: phasic.time(onset_idx),
                peak,
                amplitude,
                event_locked_to,
            },
        ));
        floor = i;
    }
    let reach = (RINGING_WINDOW_S * rate).round() as usize;
    for (k, (i, event)) in found.iter().enumerate() {
        let ringing = found.iter().enumerate().any(|(m, (j, other))| {
            if m == k || other.amplitude <= event.amplitude || i.abs_diff(*j) > reach {
                return false;
            }
            let dip = (*i.min(j)..=*i.max(j)).map(|q| y[q]).fold(f64::INFINITY, f64::min);
            y[*i] - dip < RINGING_RATIO * other.amplitude
        });
        if !ringing {
            out.push(event.clone());
        }
    }
    out
}

/// Locates the foot and the crest of one response on the fast trace;
/// returns their fractional sample indices and the rise of the fast trace
/// up to the phasic peak.
fn refine(u: &[f64], trough: usize, peak: usize, floor: usize, rate: f64) -> (f64, f64, f64) {
    let n = u.len();
    let reach = rate.round() as usize;
    let p_lo = peak.saturating_sub(reach).max(trough);
    let p_hi = (peak + reach).min(n - 1);
    let up = (p_lo..=p_hi)
        .max_by(|&a, &b| u[a].total_cmp(&u[b]).then(b.cmp(&a)))
        .unwrap_or(peak);
    let lo = trough.saturating_sub(2 * reach).max(floor);
    let foot = (lo..=up)
        .min_by(|&a, &b| u[a].total_cmp(&u[b]))
        .unwrap_or(trough);
    let level = u[foot] + ONSET_FRACTION * (u[up] - u[foot]);
    let mut onset = foot as f64;
    for j in (foot..up).rev() {
        if u[j] <= level {
            let span = u[j + 1] - u[j];
            let frac = if span > 0.0 { (level - u[j]) / span } else { 0.0 };
            onset = j as f64 + frac;
            break;
        }
    }
    let base = (lo..=peak).map(|j| u[j]).fold(f64::INFINITY, f64::min);
    (onset, crest_vertex(u, up, (CREST_FIT_S * rate).round() as usize), u[peak] - base)
}

/// Vertex of the least-squares parabola through `u` within `half` samples
/// of `i`, kept inside that span.
fn crest_vertex(u: &[f64], i: usize, half: usize) -> f64 {
    let lo = i.saturating_sub(half);
    let hi = (i + half).min(u.len() - 1);
    if hi - lo < 2 {
        return i as f64;
    }
    // Normal equations of y = a + b x + c x^2 with x centred on i.
    let (mut s, mut sy) = ([0.0f64; 5], [0.0f64; 3]);
    for j in lo..=hi {
        let x = j as f64 - i as f64;
        let mut p = 1.0;
        for (k, sk) in s.iter_mut().enumerate() {
            *sk += p;
            if k < 3 {
                sy[k] += p * u[j];
            }
            p *= x;
        }
    }
    let det3 = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let m = [[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]];
    let d = det3(m);
    let with = |col: usize| {
        let mut r = m;
        for (row, v) in r.iter_mut().zip(sy) {
            row[col] = v;
        }
        det3(r) / d
    };
    let (b, c) = (with(1), with(2));
    if d.abs() < f64::EPSILON || c >= 0.0 {
        return i as f64;
    }
    i as f64 + (-b / (2.0 * c)).clamp(lo as f64 - i as f64, hi as f64 - i as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const FS: f64 = 250.0;

    /// Difference-of-exponentials response starting at `onset`.
    fn kernel(t: f64, onset: f64, rise: f64, decay: f64) -> f64 {
        if t < onset {
            0.0
        } else {
            let d = t - onset;
            (-d / decay).exp() - (-d / rise).exp()
        }
    }

    fn planted(onsets: &[f64], dur: f64) -> Vec<f64> {
        (0..(dur * FS) as usize)
            .map(|i| {
                let t = i as f64 / FS;
                2.0 + 0.01 * t
                    + onsets
                        .iter()
                        .map(|&o| 0.3 * kernel(t, o, 0.75, 4.0))
                        .sum::<f64>()
            })
            .collect()
    }

    #[test]
    fn drift_only_is_flat() {
        let x: Vec<f64> = (0..(120.0 * FS) as usize)
            .map(|i| 5.0 + 0.02 * i as f64 / FS)
            .collect();
        let p = extract_phasic(&x, FS).unwrap();
        assert!(p.signal.iter().all(|v| v.abs() < 1e-6));
        assert!(detect_scr_peaks(&p, DEFAULT_MIN_AMPLITUDE, &[]).is_empty());
    }

    #[test]
    fn constant_errors() {
        assert!(extract_phasic(&[3.0; 5000], FS).is_err());
    }

    #[test]
    fn short_recording_warns() {
        let x = planted(&[10.0], 30.0);
        assert_eq!(extract_phasic(&x, FS).unwrap().warnings.len(), 1);
    }

    #[test]
    fn kernel_shape_survives() {
        // Oracle: the band-passed response should correlate strongly with the
        // planted kernel once drift is gone.
        let x = planted(&[30.0], 90.0);
        let p = extract_phasic(&x, FS).unwrap();
        let truth: Vec<f64> = p
            .times()
            .iter()
            .map(|&t| kernel(t, 30.0, 0.75, 4.0))
            .collect();
        let (a, b) = (25.0, 50.0);
        let idx: Vec<usize> = (0..truth.len())
            .filter(|&i| p.time(i as f64) >= a && p.time(i as f64) < b)
            .collect();
        let s: Vec<f64> = idx.iter().map(|&i| p.signal[i]).collect();
        let t: Vec<f64> = idx.iter().map(|&i| truth[i]).collect();
        assert!(crate::math::pearson(&s, &t).unwrap() > 0.9);
    }

    #[test]
    fn onsets_and_attribution() {
        let onsets = [10.0, 30.0, 47.0, 70.0, 95.0];
        let x = planted(&onsets, 120.0);
        let p = extract_phasic(&x, FS).unwrap();
        // Kernel peak is 1.545 s after onset.
        let markers = vec![
            EventMarker::new(8.0, "early").unwrap(),
            EventMarker::new(31.2, "late").unwrap(),
        ];
        let ev = detect_scr_peaks(&p, DEFAULT_MIN_AMPLITUDE, &markers);
        assert_eq!(ev.len(), onsets.len(), "{ev:?}");
        for (e, o) in ev.iter().zip(onsets) {
            assert!((e.onset - o).abs() <= 0.2, "{e:?} vs {o}");
            assert!(e.peak > e.onset && e.amplitude > 0.0);
        }
        assert_eq!(ev[0].event_locked_to.as_deref(), Some("early"));
        assert_eq!(ev[1].event_locked_to, None);
    }

    #[test]
    fn flat_phasic_has_no_events() {
        let p = EdaPhasic {
            sample_rate: 16.0,
            start: 0.0,
            signal: vec![0.0; 100],
            onset_trace: vec![0.0; 100],
            warnings: vec![],
        };
        assert!(detect_scr_peaks(&p, DEFAULT_MIN_AMPLITUDE, &[]).is_empty());
    }

    #[test]
    fn crest_vertex_recovers_parabola() {
        // Vertex at 10.3; noiseless samples are fitted exactly.
        let u: Vec<f64> = (0..20).map(|j| 2.0 - 0.1 * (j as f64 - 10.3).powi(2)).collect();
        assert!((crest_vertex(&u, 10, 4) - 10.3).abs() < 1e-9);
        // Clipped to the signal near its ends.
        assert!((crest_vertex(&u, 19, 4) - 10.3).abs() > 1.0);
        assert_eq!(crest_vertex(&[1.0, 1.0, 1.0], 1, 4), 1.0);
    }
}
