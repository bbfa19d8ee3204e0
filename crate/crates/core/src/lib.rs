//! Unsupervised FMCW radar heartbeat sensing: simulator, range processing,
//! the phase-based baseline, and noise-contrastive training of a learned
//! heartbeat extractor.

pub mod config;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod nct;
pub mod rangeproc;
pub mod sampling;
pub mod sim;
pub mod study;

pub use error::{Error, Result};
