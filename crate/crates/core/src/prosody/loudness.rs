//! Stationary Zwicker loudness from third-octave band levels (25 Hz to
//! 12.5 kHz, free field).

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

use crate::dsp::{hann, power_spectrum};
use crate::error::{Error, Result};

/// Number of third-octave bands, 25 Hz to 12.5 kHz.
pub const THIRD_OCTAVE_BANDS: usize = 28;
/// Length of the stationary sub-windows averaged per analysis window.
pub const SUBWINDOW_S: f64 = 0.25;

/// Exact centre frequency of band `k` (0 = 25 Hz, 16 = 1 kHz).
pub fn band_center(k: usize) -> f64 {
    1000.0 * 2f64.powf((k as f64 - 16.0) / 3.0)
}

/// Level ranges for the low-frequency weighting table.
const RAP: [f64; 8] = [45.0, 55.0, 65.0, 71.0, 80.0, 90.0, 100.0, 120.0];

/// Level corrections for the eleven bands up to 250 Hz, one row per range.
const DLL: [[f64; 11]; 8] = [
    [-32.0, -24.0, -16.0, -10.0, -5.0, 0.0, -7.0, -3.0, 0.0, -2.0, 0.0],
    [-29.0, -22.0, -15.0, -10.0, -4.0, 0.0, -7.0, -2.0, 0.0, -2.0, 0.0],
    [-27.0, -19.0, -14.0, -9.0, -4.0, 0.0, -6.0, -2.0, 0.0, -2.0, 0.0],
    [-25.0, -17.0, -12.0, -9.0, -3.0, 0.0, -5.0, -2.0, 0.0, -2.0, 0.0],
    [-23.0, -16.0, -11.0, -7.0, -3.0, 0.0, -4.0, -1.0, 0.0, -1.0, 0.0],
    [-20.0, -14.0, -10.0, -6.0, -3.0, 0.0, -4.0, -1.0, 0.0, -1.0, 0.0],
    [-18.0, -12.0, -9.0, -6.0, -2.0, 0.0, -3.0, -1.0, 0.0, -1.0, 0.0],
    [-15.0, -10.0, -8.0, -4.0, -2.0, 0.0, -3.0, -1.0, 0.0, -1.0, 0.0],
];

/// Threshold in quiet per critical band.
const LTQ: [f64; 20] = [
    30.0, 18.0, 12.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0,
    3.0, 3.0,
];

/// Free-field transmission to the ear.
const A0: [f64; 20] = [
    0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -0.5, -1.6, -3.2, -5.4, -5.6, -4.0, -1.5,
    2.0, 5.0, 12.0,
];

/// Critical-band level correction.
const DCB: [f64; 20] = [
    -0.25, -0.6, -0.8, -0.8, -0.5, 0.0, 0.5, 1.1, 1.5, 1.7, 1.8, 1.8, 1.7, 1.6, 1.4, 1.2, 0.8,
    0.5, 0.0, -0.5,
];

/// Upper critical-band rate (Bark) of each core-loudness band.
const ZUP: [f64; 21] = [
    0.9, 1.8, 2.8, 3.5, 4.4, 5.4, 6.6, 7.9, 9.2, 10.6, 12.3, 13.8, 15.2, 16.7, 18.1, 19.3, 20.6,
    21.8, 22.7, 23.6, 24.0,
];

/// Specific-loudness breakpoints of the upper slopes.
const RNS: [f64; 18] = [
    21.5, 18.0, 15.1, 11.5, 9.0, 6.1, 4.4, 3.1, 2.13, 1.36, 0.82, 0.42, 0.30, 0.22, 0.15, 0.10,
    0.035, 0.0,
];

/// Upper-slope steepness (sone/Bark per Bark) by breakpoint and band group.
const USL: [[f64; 8]; 18] = [
    [13.0, 8.2, 6.3, 5.5, 5.5, 5.5, 5.5, 5.5],
    [9.0, 7.5, 6.0, 5.1, 4.5, 4.5, 4.5, 4.5],
    [7.8, 6.7, 5.6, 4.9, 4.4, 3.9, 3.9, 3.9],
    [6.2, 5.4, 4.6, 4.0, 3.5, 3.2, 3.2, 3.2],
    [4.5, 3.8, 3.6, 3.2, 2.9, 2.7, 2.7, 2.7],
    [3.7, 3.0, 2.8, 2.35, 2.2, 2.2, 2.2, 2.2],
    [2.9, 2.3, 2.1, 1.9, 1.8, 1.7, 1.7, 1.7],
    [2.4, 1.7, 1.5, 1.35, 1.3, 1.3, 1.3, 1.3],
    [1.95, 1.45, 1.3, 1.15, 1.1, 1.1, 1.1, 1.1],
    [1.5, 1.2, 0.94, 0.86, 0.82, 0.82, 0.82, 0.82],
    [0.72, 0.67, 0.64, 0.63, 0.62, 0.62, 0.62, 0.62],
    [0.59, 0.53, 0.51, 0.50, 0.42, 0.42, 0.42, 0.42],
    [0.40, 0.33, 0.26, 0.24, 0.24, 0.22, 0.22, 0.22],
    [0.27, 0.21, 0.20, 0.18, 0.17, 0.17, 0.17, 0.17],
    [0.16, 0.15, 0.14, 0.12, 0.11, 0.11, 0.11, 0.11],
    [0.12, 0.11, 0.10, 0.08, 0.08, 0.08, 0.08, 0.08],
    [0.09, 0.08, 0.07, 0.06, 0.06, 0.06, 0.06, 0.05],
    [0.06, 0.05, 0.03, 0.02, 0.02, 0.02, 0.02, 0.02],
];

/// Core loudness of the 20 critical bands plus a trailing zero band.
fn core_loudness(levels: &[f64; THIRD_OCTAVE_BANDS]) -> [f64; 21] {
    let mut ti = [0.0; 11];
    for (i, t) in ti.iter_mut().enumerate() {
        let mut j = 0;
        while levels[i] > RAP[j] - DLL[j][i] && j < 7 {
            j += 1;
        }
        *t = 10f64.powf((levels[i] + DLL[j][i]) / 10.0);
    }
    let groups = [
        ti[0..6].iter().sum::<f64>(),
        ti[6..9].iter().sum::<f64>(),
        ti[9..11].iter().sum::<f64>(),
    ];
    let mut le = [0.0; 20];
    for (k, g) in groups.iter().enumerate() {
        le[k] = if *g > 0.0 { 10.0 * g.log10() } else { 0.0 };
    }
    le[3..].copy_from_slice(&levels[11..]);

    let s = 0.25;
    let mut nm = [0.0; 21];
    for i in 0..20 {
        let l = le[i] - A0[i];
        if l > LTQ[i] {
            let l = l - DCB[i];
            let v = 0.0635
                * 10f64.powf(0.025 * LTQ[i])
                * ((1.0 - s + s * 10f64.powf(0.1 * (l - LTQ[i]))).powf(0.25) - 1.0);
            nm[i] = v.max(0.0);
        }
    }
    let korry = 0.4 + 0.32 * nm[0].powf(0.2);
    if korry <= 1.0 {
        nm[0] *= korry;
    }
    nm
}

/// Integrates core loudness with the upper masking slopes.
fn integrate_slopes(nm: &[f64; 21]) -> f64 {
    let mut total = 0.0;
    let (mut z1, mut n1) = (0.0f64, 0.0f64);
    let mut j = 17usize;
    for i in 0..21 {
        let zup = ZUP[i] + 1e-4;
        let ig = i.saturating_sub(1).min(7);
        let mut first = true;
        while first || z1 < zup {
            first = false;
            let (z2, n2);
            if n1 <= nm[i] {
                if n1 < nm[i] {
                    j = 0;
                    while RNS[j] > nm[i] && j < 17 {
                        j += 1;
                    }
                }
                z2 = zup;
                n2 = nm[i];
                total += n2 * (z2 - z1);
            } else {
                let mut n = RNS[j].max(nm[i]);
                let mut dz = (n1 - n) / USL[j][ig];
                let mut z = z1 + dz;
                if z > zup {
                    z = zup;
                    dz = z - z1;
                    n = n1 - dz * USL[j][ig];
                }
                total += dz * (n1 + n) / 2.0;
                z2 = z;
                n2 = n;
            }
            if n2 <= RNS[j] && j < 17 {
                j += 1;
            }
            n1 = n2;
            z1 = z2;
        }
    }
    total.max(0.0)
}

/// Total loudness in sone from 28 third-octave levels in dB SPL.
pub fn loudness_from_levels(levels: &[f64; THIRD_OCTAVE_BANDS]) -> f64 {
    integrate_slopes(&core_loudness(levels))
}

/// Third-octave band levels (dB SPL) of one frame from its Hann-windowed
/// power spectrum. Bands with no energy get a level far below threshold.
pub fn third_octave_levels(
    frame: &[f64],
    sample_rate: f64,
    calibration_offset_db: f64,
) -> [f64; THIRD_OCTAVE_BANDS] {
    let window = hann(frame.len());
    let (df, bins) = power_spectrum(frame, &window, sample_rate);
    let mut levels = [-200.0; THIRD_OCTAVE_BANDS];
    for (k, level) in levels.iter_mut().enumerate() {
        let fc = band_center(k);
        let (lo, hi) = (fc * 2f64.powf(-1.0 / 6.0), fc * 2f64.powf(1.0 / 6.0));
        let power: f64 = bins
            .iter()
            .enumerate()
            .filter(|(b, _)| {
                let f = *b as f64 * df;
                f >= lo && f < hi
            })
            .map(|(_, p)| p)
            .sum();
        if power > 0.0 {
            *level = 10.0 * power.log10() + calibration_offset_db;
        }
    }
    levels
}

/// Mean stationary loudness over consecutive 250 ms sub-windows; a window
/// shorter than that is treated as one sub-window.
pub fn compute_loudness(
    window: &[f64],
    sample_rate: f64,
    calibration_offset_db: Option<f64>,
) -> Result<f64> {
    let offset = calibration_offset_db
        .ok_or_else(|| Error::MissingCalibration("audio calibration offset".into()))?;
    if window.is_empty() {
        return Err(Error::Empty);
    }
    let sub = ((SUBWINDOW_S * sample_rate).round() as usize).max(1);
    let chunks: Vec<&[f64]> = if window.len() < sub {
        alloc::vec![window]
    } else {
        window.chunks_exact(sub).collect()
    };
    let sum: f64 = chunks
        .iter()
        .map(|c| loudness_from_levels(&third_octave_levels(c, sample_rate, offset)))
        .sum();
    Ok(sum / chunks.len() as f64)
}
