//! Shared signal primitives.

pub mod epoch;
pub mod filter;
pub mod norm;
pub mod resample;
pub mod spectral;

pub use epoch::{epoch_ranges, segment_epochs, EpochSpec};
pub use filter::{
    design_chain, design_filter, Biquad, FilterBand, FilterSpec, SosFilter, DEFAULT_NOTCH_HARMONICS,
};
pub use norm::{detrend_linear, minmax_scale, rectify, zscore};
pub use resample::{block_mean, interp_linear};
pub use spectral::{fft_in_place, hann, power_spectrum, welch_psd, Psd};
