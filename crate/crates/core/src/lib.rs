//! Signal processing, decoding and interpretation primitives for multimodal
//! communication-cue analysis.
//!
//! Everything here is `no_std` and only needs an allocator; IO, clocks and
//! threads live in the `cuelayer` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autonomic;
pub mod dsp;
pub mod emotion;
pub mod error;
pub mod gesture;
pub mod interpret;
pub mod linalg;
pub mod math;
pub mod neuro;
pub mod prosody;
pub mod sync;
pub mod verbal;

pub use error::{Error, Result};
