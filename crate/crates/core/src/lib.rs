//! Inverse-engineered harmonic+quartic trap waveforms for separating two
//! trapped ions, plus classical and quantum simulators that check them.

pub mod ansatz;
pub mod classical;
pub mod error;
pub mod experiments;
pub mod nelder_mead;
pub mod perturbation;
pub mod poly;
pub mod reference;
pub mod potential;
pub mod quantum;
pub mod schedule;
pub mod shooting;
pub mod units;

pub use error::{Error, Result};
