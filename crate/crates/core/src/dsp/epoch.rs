//! Fixed-length, fixed-hop segmentation.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochSpec {
    /// Seconds.
    pub length: f64,
    /// Seconds.
    pub hop: f64,
}

impl EpochSpec {
    /// One-second epochs with 50 % overlap.
    pub const EEG: EpochSpec = EpochSpec {
        length: 1.0,
        hop: 0.5,
    };

    pub fn new(length: f64, hop: f64) -> Result<Self> {
        let s = Self { length, hop };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hop > 0.0) || self.hop > self.length {
            return Err(invalid("epoch spec requires 0 < hop <= length"));
        }
        Ok(())
    }

    /// `(length, hop)` in samples.
    pub fn in_samples(&self, sample_rate: f64) -> (usize, usize) {
        let l = (self.length * sample_rate).round() as usize;
        let h = (self.hop * sample_rate).round() as usize;
        (l.max(1), h.max(1))
    }
}

/// Sample ranges of each epoch: `floor((N − L)/H) + 1` of them.
pub fn epoch_ranges(n: usize, sample_rate: f64, spec: &EpochSpec) -> Result<Vec<Range<usize>>> {
    spec.validate()?;
    let (l, h) = spec.in_samples(sample_rate);
    if n < l {
        return Err(Error::TooShort { needed: l, got: n });
    }
    let count = (n - l) / h + 1;
    Ok((0..count).map(|k| k * h..k * h + l).collect())
}

pub fn segment_epochs<'a>(
    signal: &'a [f64],
    sample_rate: f64,
    spec: &EpochSpec,
) -> Result<Vec<&'a [f64]>> {
    Ok(epoch_ranges(signal.len(), sample_rate, spec)?
        .into_iter()
        .map(|r| &signal[r])
        .collect())
}
