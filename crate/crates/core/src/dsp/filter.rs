//! IIR filter design (Butterworth via bilinear transform, second-order notch
//! resonators) and application as cascaded biquads.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Order used wherever only corner frequencies are known.
pub const DEFAULT_ORDER: usize = 4;
/// Quality factor of the notch resonator.
pub const DEFAULT_NOTCH_Q: f64 = 30.0;
/// Mains harmonics cascaded by [`FilterSpec::mains_notch`].
pub const DEFAULT_NOTCH_HARMONICS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FilterBand {
    Highpass { corner: f64 },
    Lowpass { corner: f64 },
    Bandpass { low: f64, high: f64 },
    Notch { center: f64, q: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub band: FilterBand,
    /// Prototype order; even. Ignored for notches.
    pub order: usize,
    pub sample_rate: f64,
}

impl FilterSpec {
    pub fn highpass(corner: f64, sample_rate: f64) -> Self {
        Self {
            band: FilterBand::Highpass { corner },
            order: DEFAULT_ORDER,
            sample_rate,
        }
    }

    pub fn lowpass(corner: f64, sample_rate: f64) -> Self {
        Self {
            band: FilterBand::Lowpass { corner },
            order: DEFAULT_ORDER,
            sample_rate,
        }
    }

    pub fn bandpass(low: f64, high: f64, sample_rate: f64) -> Self {
        Self {
            band: FilterBand::Bandpass { low, high },
            order: DEFAULT_ORDER,
            sample_rate,
        }
    }

    pub fn notch(center: f64, sample_rate: f64) -> Self {
        Self {
            band: FilterBand::Notch {
                center,
                q: DEFAULT_NOTCH_Q,
            },
            order: 2,
            sample_rate,
        }
    }

    pub fn with_order(mut self, order: usize) -> Self {
        self.order = order;
        self
    }

    /// Notches at `base`, `2·base`, … (`harmonics` of them), skipping any at or
    /// above Nyquist.
    pub fn mains_notch(base: f64, harmonics: usize, sample_rate: f64) -> Vec<FilterSpec> {
        (1..=harmonics)
            .map(|k| base * k as f64)
            .filter(|&f| f < sample_rate / 2.0)
            .map(|f| FilterSpec::notch(f, sample_rate))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fs = self.sample_rate;
        if !(fs > 0.0) || !fs.is_finite() {
            return Err(invalid("sample rate must be positive"));
        }
        let nyquist = fs / 2.0;
        let check = |f: f64| -> Result<()> {
            if !(f > 0.0) {
                return Err(invalid("corner frequencies must be positive"));
            }
            if f >= nyquist {
                return Err(Error::CornerAboveNyquist { corner: f, nyquist });
            }
            Ok(())
        };
        match self.band {
            FilterBand::Highpass { corner } | FilterBand::Lowpass { corner } => check(corner)?,
            FilterBand::Bandpass { low, high } => {
                check(low)?;
                check(high)?;
                if low >= high {
                    return Err(invalid("bandpass requires low < high"));
                }
            }
            FilterBand::Notch { center, q } => {
                check(center)?;
                if !(q > 0.0) {
                    return Err(invalid("notch Q must be positive"));
                }
                return Ok(());
            }
        }
        if self.order == 0 || self.order % 2 != 0 {
            return Err(invalid("filter order must be even and positive"));
        }
        Ok(())
    }
}

/// One second-order section, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        let num = Complex64::new(self.b[0], 0.0) + z_inv * self.b[1] + z2 * self.b[2];
        let den = Complex64::new(1.0, 0.0) + z_inv * self.a[0] + z2 * self.a[1];
        num / den
    }

    /// Roots of `z² + a1 z + a2`.
    pub fn poles(&self) -> [Complex64; 2] {
        let (a1, a2) = (self.a[0], self.a[1]);
        let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
        [(-a1 + disc) / 2.0, (-a1 - disc) / 2.0]
    }

    /// Steady-state transposed-DF2 state for a unit constant input, and the
    /// section's DC gain.
    fn step_state(&self) -> ([f64; 2], f64) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let g = (b0 + b1 + b2) / (1.0 + a1 + a2);
        let s2 = b2 - a2 * g;
        let s1 = b1 - a1 * g + s2;
        ([s1, s2], g)
    }
}

/// Cascade of biquads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SosFilter {
    pub sections: Vec<Biquad>,
    pub sample_rate: f64,
}

impl SosFilter {
    /// Total filter order (two per section).
    pub fn order(&self) -> usize {
        2 * self.sections.len()
    }

    pub fn response(&self, freq: f64) -> Complex64 {
        let w = 2.0 * PI * freq / self.sample_rate;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn magnitude(&self, freq: f64) -> f64 {
        self.response(freq).norm()
    }

    pub fn max_pole_magnitude(&self) -> f64 {
        self.sections
            .iter()
            .flat_map(|s| s.poles())
            .map(|p| p.norm())
            .fold(0.0, f64::max)
    }

    pub fn is_stable(&self) -> bool {
        self.max_pole_magnitude() < 1.0 - 1e-6
    }

    /// Concatenates two cascades designed for the same sample rate.
    pub fn then(mut self, other: SosFilter) -> SosFilter {
        self.sections.extend(other.sections);
        self
    }

    /// Causal filtering from zero initial state.
    pub fn apply(&self, signal: &[f64]) -> Result<Vec<f64>> {
        if signal.is_empty() {
            return Err(Error::Empty);
        }
        let mut y = signal.to_vec();
        for s in &self.sections {
            run_section(s, &mut y, [0.0, 0.0]);
        }
        Ok(y)
    }

    /// Forward-backward filtering with odd-extension padding and steady-state
    /// initial conditions; the default pad length matches common practice
    /// (three times the number of coefficients).
    pub fn apply_zero_phase(&self, signal: &[f64]) -> Result<Vec<f64>> {
        let padlen = 3 * (2 * self.sections.len() + 1);
        self.apply_zero_phase_padded(signal, padlen)
    }

    pub fn apply_zero_phase_padded(&self, signal: &[f64], padlen: usize) -> Result<Vec<f64>> {
        if signal.is_empty() {
            return Err(Error::Empty);
        }
        let needed = 3 * self.order();
        if signal.len() < needed {
            return Err(Error::TooShort {
                needed,
                got: signal.len(),
            });
        }
        let n = signal.len();
        let pad = padlen.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        let first = signal[0];
        let last = signal[n - 1];
        for i in (1..=pad).rev() {
            ext.push(2.0 * first - signal[i]);
        }
        ext.extend_from_slice(signal);
        for i in 1..=pad {
            ext.push(2.0 * last - signal[n - 1 - i]);
        }

        self.run_with_steady_state(&mut ext);
        ext.reverse();
        self.run_with_steady_state(&mut ext);
        ext.reverse();
        Ok(ext[pad..pad + n].to_vec())
    }

    fn run_with_steady_state(&self, x: &mut [f64]) {
        let mut level = x[0];
        for s in &self.sections {
            let (state, gain) = s.step_state();
            run_section(s, x, [state[0] * level, state[1] * level]);
            level *= gain;
        }
    }
}

fn run_section(s: &Biquad, x: &mut [f64], mut z: [f64; 2]) {
    let [b0, b1, b2] = s.b;
    let [a1, a2] = s.a;
    for v in x.iter_mut() {
        let input = *v;
        let out = b0 * input + z[0];
        z[0] = b1 * input - a1 * out + z[1];
        z[1] = b2 * input - a2 * out;
        *v = out;
    }
}

/// Designs the biquad cascade for `spec`.
pub fn design_filter(spec: &FilterSpec) -> Result<SosFilter> {
    spec.validate()?;
    let fs = spec.sample_rate;
    match spec.band {
        FilterBand::Notch { center, q } => Ok(SosFilter {
            sections: vec![notch_section(center, q, fs)],
            sample_rate: fs,
        }),
        FilterBand::Lowpass { corner } => butterworth(spec.order, fs, Shape::Lowpass(corner)),
        FilterBand::Highpass { corner } => butterworth(spec.order, fs, Shape::Highpass(corner)),
        FilterBand::Bandpass { low, high } => {
            butterworth(spec.order, fs, Shape::Bandpass(low, high))
        }
    }
}

/// Designs and concatenates several specs sharing a sample rate.
pub fn design_chain(specs: &[FilterSpec]) -> Result<SosFilter> {
    let first = specs.first().ok_or(Error::Empty)?;
    let mut out = SosFilter {
        sections: Vec::new(),
        sample_rate: first.sample_rate,
    };
    for s in specs {
        if s.sample_rate != first.sample_rate {
            return Err(invalid("chained filters must share a sample rate"));
        }
        out = out.then(design_filter(s)?);
    }
    Ok(out)
}

fn notch_section(center: f64, q: f64, fs: f64) -> Biquad {
    let w0 = 2.0 * PI * center / fs;
    let alpha = w0.sin() / (2.0 * q);
    let cw = w0.cos();
    let a0 = 1.0 + alpha;
    Biquad {
        b: [1.0 / a0, -2.0 * cw / a0, 1.0 / a0],
        a: [-2.0 * cw / a0, (1.0 - alpha) / a0],
    }
}

enum Shape {
    Lowpass(f64),
    Highpass(f64),
    Bandpass(f64, f64),
}

fn prewarp(f: f64, fs: f64) -> f64 {
    2.0 * fs * (PI * f / fs).tan()
}

fn butterworth(order: usize, fs: f64, shape: Shape) -> Result<SosFilter> {
    // Analog prototype poles on the unit circle's left half.
    let proto: Vec<Complex64> = (0..order)
        .map(|k| {
            let m = -(order as f64) + 1.0 + 2.0 * k as f64;
            -Complex64::from_polar(1.0, PI * m / (2.0 * order as f64))
        })
        .collect();

    let (analog, numerator, reference_freq) = match shape {
        Shape::Lowpass(fc) => {
            let wn = prewarp(fc, fs);
            (
                proto.iter().map(|p| p * wn).collect::<Vec<_>>(),
                [1.0, 2.0, 1.0],
                0.0,
            )
        }
        Shape::Highpass(fc) => {
            let wn = prewarp(fc, fs);
            (
                proto.iter().map(|p| wn / p).collect::<Vec<_>>(),
                [1.0, -2.0, 1.0],
                fs / 2.0,
            )
        }
        Shape::Bandpass(lo, hi) => {
            let w1 = prewarp(lo, fs);
            let w2 = prewarp(hi, fs);
            let bw = w2 - w1;
            let w0 = (w1 * w2).sqrt();
            let mut poles = Vec::with_capacity(2 * order);
            for p in &proto {
                let half = p * (bw / 2.0);
                let root = (half * half - w0 * w0).sqrt();
                poles.push(half + root);
                poles.push(half - root);
            }
            let center = fs / PI * (w0 / (2.0 * fs)).atan();
            (poles, [1.0, 0.0, -1.0], center)
        }
    };

    let two_fs = 2.0 * fs;
    let digital: Vec<Complex64> = analog
        .iter()
        .map(|s| (two_fs + s) / (two_fs - s))
        .collect();

    let mut upper: Vec<Complex64> = digital.iter().copied().filter(|p| p.im > 1e-12).collect();
    let reals: Vec<f64> = digital
        .iter()
        .filter(|p| p.im.abs() <= 1e-12)
        .map(|p| p.re)
        .collect();
    upper.sort_by(|a, b| a.norm().total_cmp(&b.norm()));

    let mut sections: Vec<Biquad> = upper
        .iter()
        .map(|p| Biquad {
            b: numerator,
            a: [-2.0 * p.re, p.norm_sqr()],
        })
        .collect();
    for pair in reals.chunks(2) {
        let (r1, r2) = (pair[0], *pair.get(1).unwrap_or(&0.0));
        sections.push(Biquad {
            b: numerator,
            a: [-(r1 + r2), r1 * r2],
        });
    }

    let mut filter = SosFilter {
        sections,
        sample_rate: fs,
    };
    let gain = filter.magnitude(reference_freq);
    if !(gain > 0.0) || !gain.is_finite() {
        return Err(Error::Numerical("filter gain normalization failed".into()));
    }
    for b in filter.sections[0].b.iter_mut() {
        *b /= gain;
    }
    Ok(filter)
}
