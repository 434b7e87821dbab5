//! RIS-aided mmWave MIMO-OFDM positioning: channel synthesis, channel
//! parameter estimation, Fisher-information bounds, per-path position
//! fusion, RIS phase design, and Monte Carlo experiment drivers.

pub mod channel;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod fisher;
pub mod fusion;
pub mod geometry;
pub mod ris_design;
pub mod scenario;
pub mod signal;

pub use error::{Error, Result};
