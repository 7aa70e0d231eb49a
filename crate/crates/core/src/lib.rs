//! Dispersive readout of a superconducting qubit: resonator field model,
//! detection-chain simulator, least-squares fitting, SNR model and the
//! characterization protocols that extract χ, κ, drive power and
//! measurement efficiency from Ramsey and IQ data.
//!
//! Units throughout: angular frequencies and rates in rad/µs, time in µs,
//! fields in sqrt(photons).
//!
//! The crate is `no_std` and needs only `alloc`. IO, configuration files and
//! the command line live in the `readoutchar` companion crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod fitting;
pub mod model;
pub mod protocols;
pub mod rng;
pub mod signal;
pub mod snr;

pub use model::{DeviceParams, DrivePulse, FieldTrajectory, ModelError, PulseTrain, QubitState, Window};
pub use num_complex::Complex64;
pub use rng::NoiseKey;
