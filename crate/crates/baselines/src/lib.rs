//! Reference competitor methods for image change monitoring: a
//! PCA-projected Hotelling-T2 statistic with CUSUM accumulation, and the
//! maximum mean discrepancy scanned over candidate change times.
//!
//! Both are deterministic given inputs and configuration; neither carries
//! an internal RNG.

mod error;
mod hotelling;
mod mmd;

pub use error::BaselineError;
pub use hotelling::{fit_hotelling, DriftSpec, HotellingConfig, HotellingModel, HotellingMonitor};
pub use mmd::{mmd_statistic, Bandwidth, MmdConfig, MmdMonitor};
