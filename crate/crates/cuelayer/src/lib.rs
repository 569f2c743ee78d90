//! Session runtime around `cuelayer-core`: a concurrent stream bus, the
//! JSONL session format, signal simulators with ground truth, the offline
//! analysis pipeline, replay, the live WebSocket service and configuration
//! loading.

pub mod analysis;
pub mod bus;
pub mod config;
pub mod error;
pub mod protocol;
pub mod record;
pub mod replay;
pub mod report;
pub mod service;
pub mod session;
pub mod sim;

pub use error::{Error, Result};
