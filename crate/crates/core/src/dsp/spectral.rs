//! Radix-2 FFT and Welch power spectral density.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

/// In-place iterative radix-2 FFT. `buf.len()` must be a power of two.
pub fn fft_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    debug_assert!(n.is_power_of_two());
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -2.0 * PI / len as f64;
        let wlen = Complex64::from_polar(1.0, ang);
        for start in (0..n).step_by(len) {
            let mut w = Complex64::new(1.0, 0.0);
            for k in 0..len / 2 {
                let u = buf[start + k];
                let v = buf[start + k + len / 2] * w;
                buf[start + k] = u + v;
                buf[start + k + len / 2] = u - v;
                w *= wlen;
            }
        }
        len <<= 1;
    }
}

/// Symmetric Hann window of length `n` (periodic variant, as used for
/// spectral estimation).
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// One-sided power spectrum of a windowed frame, scaled so that summing the
/// returned bins gives the frame's mean-square value. Frames are zero-padded
/// to a power of two. Returns `(bin_width_hz, bins)`.
pub fn power_spectrum(frame: &[f64], window: &[f64], sample_rate: f64) -> (f64, Vec<f64>) {
    let nfft = frame.len().next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    let mut wss = 0.0;
    for (i, (&x, &w)) in frame.iter().zip(window).enumerate() {
        buf[i] = Complex64::new(x * w, 0.0);
        wss += w * w;
    }
    fft_in_place(&mut buf);
    let half = nfft / 2;
    let norm = 1.0 / (nfft as f64 * wss.max(f64::MIN_POSITIVE));
    let bins = (0..=half)
        .map(|k| {
            let p = buf[k].norm_sqr() * norm;
            if k == 0 || k == half {
                p
            } else {
                2.0 * p
            }
        })
        .collect();
    (sample_rate / nfft as f64, bins)
}

/// Welch PSD estimate with a Hann window and mean detrending per segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    pub frequencies: Vec<f64>,
    /// Power spectral density (units²/Hz).
    pub density: Vec<f64>,
}

impl Psd {
    pub fn resolution(&self) -> f64 {
        if self.frequencies.len() > 1 {
            self.frequencies[1] - self.frequencies[0]
        } else {
            0.0
        }
    }

    /// Integrated power in `[lo, hi]` Hz.
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        let df = self.resolution();
        self.frequencies
            .iter()
            .zip(&self.density)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, p)| p * df)
            .sum()
    }

    pub fn total_power(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.resolution()
    }
}

/// Welch's averaged periodogram. `overlap` is the fraction in `[0, 1)`.
pub fn welch_psd(
    signal: &[f64],
    sample_rate: f64,
    segment_length: usize,
    overlap: f64,
) -> Result<Psd> {
    if segment_length < 2 {
        return Err(invalid("segment length must be at least 2"));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(invalid("overlap must be in [0, 1)"));
    }
    if signal.len() < segment_length {
        return Err(Error::TooShort {
            needed: segment_length,
            got: signal.len(),
        });
    }
    let hop = ((segment_length as f64 * (1.0 - overlap)).round() as usize).max(1);
    let window = hann(segment_length);
    let nfft = segment_length.next_power_of_two();
    let half = nfft / 2;
    let mut acc = vec![0.0; half + 1];
    let mut count = 0usize;
    let mut seg = vec![0.0; segment_length];
    let mut start = 0;
    while start + segment_length <= signal.len() {
        let chunk = &signal[start..start + segment_length];
        let m = crate::math::mean(chunk);
        for (d, s) in seg.iter_mut().zip(chunk) {
            *d = s - m;
        }
        let (_, bins) = power_spectrum(&seg, &window, sample_rate);
        for (a, b) in acc.iter_mut().zip(&bins) {
            *a += b;
        }
        count += 1;
        start += hop;
    }
    // power_spectrum gives mean-square per bin; convert to density.
    let df = sample_rate / nfft as f64;
    let density = acc.iter().map(|p| p / count as f64 / df).collect();
    let frequencies = (0..=half).map(|k| k as f64 * df).collect();
    Ok(Psd {
        frequencies,
        density,
    })
}
