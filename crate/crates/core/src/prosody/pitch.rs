//! Fundamental frequency tracking: YIN difference function with
//! cumulative-mean normalization, multi-threshold candidate sets per frame
//! and Viterbi smoothing across frames.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

use crate::dsp::{design_filter, FilterSpec};
use crate::error::{invalid, Error, Result};

/// Analysis rate the input is decimated towards.
pub const TARGET_RATE: f64 = 16_000.0;
/// Frame hop of the pitch contour.
pub const HOP_S: f64 = 0.01;
/// Dip thresholds on the normalized difference; each threshold votes for
/// the first dip below it.
pub const THRESHOLDS: [f64; 5] = [0.05, 0.1, 0.15, 0.2, 0.3];
/// Minimum share of voiced contour frames for a window to be voiced.
pub const MIN_VOICED_SHARE: f64 = 0.25;

/// Viterbi cost of one octave of pitch movement between frames.
const OCTAVE_JUMP_COST: f64 = 8.0;
/// Viterbi cost of switching between voiced and unvoiced.
const VOICING_SWITCH_COST: f64 = 2.0;
const MIN_PROB: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchRange {
    pub min_hz: f64,
    pub max_hz: f64,
}

impl PitchRange {
    pub const DEFAULT: Self = Self {
        min_hz: 60.0,
        max_hz: 500.0,
    };

    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        if !(self.min_hz > 0.0 && self.min_hz < self.max_hz && self.max_hz < sample_rate / 2.0) {
            return Err(invalid(alloc::format!(
                "pitch range {}..{} Hz must lie within (0, {}) Hz",
                self.min_hz,
                self.max_hz,
                sample_rate / 2.0
            )));
        }
        Ok(())
    }
}

/// One point of the pitch contour, `t` at the frame centre relative to the
/// start of the analysed signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchPoint {
    pub t: f64,
    pub f0: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    f0: f64,
    prob: f64,
}

/// Decimates by an integer factor towards `TARGET_RATE` after a zero-phase
/// anti-alias lowpass. Returns the signal and its new rate.
fn decimate(signal: &[f64], sample_rate: f64) -> Result<(Vec<f64>, f64)> {
    let factor = (sample_rate / TARGET_RATE).floor() as usize;
    if factor <= 1 {
        return Ok((signal.to_vec(), sample_rate));
    }
    let new_rate = sample_rate / factor as f64;
    let lp = design_filter(&FilterSpec::lowpass(0.45 * new_rate, sample_rate).with_order(8))?;
    let filtered = lp.apply_zero_phase(signal)?;
    Ok((filtered.into_iter().step_by(factor).collect(), new_rate))
}

/// Normalized YIN difference for lags `0..=tau_max` over `w` samples from
/// `frame`, plus the raw difference for interpolation.
fn yin_difference(frame: &[f64], w: usize, tau_max: usize) -> (Vec<f64>, Vec<f64>) {
    let mut d = alloc::vec![0.0; tau_max + 2];
    for (tau, slot) in d.iter_mut().enumerate().skip(1) {
        let mut acc = 0.0;
        for j in 0..w {
            let diff = frame[j] - frame[j + tau];
            acc += diff * diff;
        }
        *slot = acc;
    }
    let mut norm = alloc::vec![1.0; d.len()];
    let mut running = 0.0;
    for tau in 1..d.len() {
        running += d[tau];
        norm[tau] = if running > 0.0 {
            d[tau] * tau as f64 / running
        } else {
            1.0
        };
    }
    (norm, d)
}

fn refine(d: &[f64], tau: usize) -> f64 {
    if tau == 0 || tau + 1 >= d.len() {
        return tau as f64;
    }
    let (a, b, c) = (d[tau - 1], d[tau], d[tau + 1]);
    let den = a - 2.0 * b + c;
    if den.abs() < f64::MIN_POSITIVE {
        return tau as f64;
    }
    let shift = 0.5 * (a - c) / den;
    tau as f64 + shift.clamp(-1.0, 1.0)
}

fn candidates(norm: &[f64], d: &[f64], tau_min: usize, tau_max: usize, fs: f64) -> Vec<Candidate> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    for &th in &THRESHOLDS {
        let mut tau = tau_min;
        while tau <= tau_max && norm[tau] >= th {
            tau += 1;
        }
        if tau > tau_max {
            continue;
        }
        while tau < tau_max && norm[tau + 1] < norm[tau] {
            tau += 1;
        }
        match out.iter_mut().find(|(t, _)| *t == tau) {
            Some(entry) => entry.1 += 1,
            None => out.push((tau, 1)),
        }
    }
    out.into_iter()
        .map(|(tau, votes)| Candidate {
            f0: fs / refine(d, tau),
            prob: votes as f64 / THRESHOLDS.len() as f64,
        })
        .collect()
}

/// Samples of input the tracker needs for one frame at `sample_rate`.
pub fn min_window_samples(sample_rate: f64, range: &PitchRange) -> usize {
    (2.0 * sample_rate / range.min_hz).ceil() as usize
}

/// Pitch contour with a 10 ms hop. Frames are unvoiced when no candidate
/// survives the smoothing or the smoothed value leaves `range`.
pub fn pitch_contour(signal: &[f64], sample_rate: f64, range: &PitchRange) -> Result<Vec<PitchPoint>> {
    range.validate(sample_rate)?;
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let needed = min_window_samples(sample_rate, range);
    if signal.len() < needed {
        return Err(Error::TooShort {
            needed,
            got: signal.len(),
        });
    }
    let (x, fs) = decimate(signal, sample_rate)?;
    let tau_max = (fs / range.min_hz).ceil() as usize;
    let tau_min = ((fs / range.max_hz).floor() as usize).max(2);
    let w = tau_max;
    let span = w + tau_max + 2;
    let hop = ((HOP_S * fs).round() as usize).max(1);
    if x.len() < span {
        return Err(Error::TooShort {
            needed,
            got: signal.len(),
        });
    }
    let n_frames = (x.len() - span) / hop + 1;
    let mut times = Vec::with_capacity(n_frames);
    let mut cands = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let start = i * hop;
        let (norm, d) = yin_difference(&x[start..start + span], w, tau_max);
        cands.push(candidates(&norm, &d, tau_min, tau_max, fs));
        times.push((start as f64 + span as f64 / 2.0) / fs);
    }
    let path = viterbi(&cands);
    Ok(times
        .into_iter()
        .zip(path)
        .map(|(t, f0)| PitchPoint {
            t,
            f0: f0.filter(|f| *f >= range.min_hz && *f <= range.max_hz),
        })
        .collect())
}

/// State 0 of each frame is unvoiced; state k > 0 is candidate k − 1.
fn state(c: &[Candidate], s: usize) -> Option<&Candidate> {
    if s == 0 {
        None
    } else {
        c.get(s - 1)
    }
}

fn viterbi(frames: &[Vec<Candidate>]) -> Vec<Option<f64>> {
    if frames.is_empty() {
        return Vec::new();
    }
    let emission = |c: &[Candidate]| -> Vec<f64> {
        let voiced: f64 = c.iter().map(|k| k.prob).sum();
        let mut e = Vec::with_capacity(c.len() + 1);
        e.push(-(1.0 - voiced.min(1.0)).max(MIN_PROB).ln());
        e.extend(c.iter().map(|k| -k.prob.max(MIN_PROB).ln()));
        e
    };
    let transition = |a: Option<&Candidate>, b: Option<&Candidate>| -> f64 {
        match (a, b) {
            (None, None) => 0.0,
            (Some(x), Some(y)) => OCTAVE_JUMP_COST * (y.f0 / x.f0).log2().abs(),
            _ => VOICING_SWITCH_COST,
        }
    };

    let mut cost = emission(&frames[0]);
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(frames.len());
    back.push(alloc::vec![0; cost.len()]);
    for i in 1..frames.len() {
        let e = emission(&frames[i]);
        let mut next = alloc::vec![f64::INFINITY; e.len()];
        let mut ptr = alloc::vec![0; e.len()];
        for (s, slot) in next.iter_mut().enumerate() {
            for (p, &c) in cost.iter().enumerate() {
                let v = c + transition(state(&frames[i - 1], p), state(&frames[i], s));
                if v < *slot {
                    *slot = v;
                    ptr[s] = p;
                }
            }
            *slot += e[s];
        }
        cost = next;
        back.push(ptr);
    }
    let mut s = crate::math::argmin(&cost).unwrap_or(0);
    let mut path = alloc::vec![None; frames.len()];
    for i in (0..frames.len()).rev() {
        path[i] = state(&frames[i], s).map(|c| c.f0);
        s = back[i][s];
    }
    path
}

/// Median of the voiced contour points, or `None` when fewer than a quarter
/// of them are voiced.
pub fn summarize_contour(points: &[PitchPoint]) -> Option<f64> {
    let voiced: Vec<f64> = points.iter().filter_map(|p| p.f0).collect();
    if voiced.is_empty() || (voiced.len() as f64) < MIN_VOICED_SHARE * points.len() as f64 {
        return None;
    }
    crate::math::median(&voiced)
}

/// Pitch of a window, or `None` for an unvoiced verdict. The window must
/// span at least two periods of the lowest admissible pitch.
pub fn estimate_pitch(window: &[f64], sample_rate: f64, range: &PitchRange) -> Result<Option<f64>> {
    Ok(summarize_contour(&pitch_contour(window, sample_rate, range)?))
}
