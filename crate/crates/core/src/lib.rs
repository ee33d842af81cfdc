//! Weighted sum-rate maximization for full-duplex systems assisted by
//! multiple intelligent reflecting surfaces (IRSs), with transceiver
//! hardware impairments.
//!
//! The crate is organized bottom-up:
//!
//! * [`model`] holds the domain types and the closed-form physical-layer
//!   math (effective channels, distortion variances, SINRs, rates).
//! * [`channelgen`] draws random channel realizations from a scenario
//!   geometry (path loss, Rician/Rayleigh fading, steering vectors).
//! * [`wmmse`] is the alternating WMMSE solver for beamformers, combiners
//!   and uplink powers at fixed IRS phases.
//! * [`phaseopt`] is the gradient-ascent IRS phase optimizer.
//! * [`orchestrator`] alternates the two blocks and implements the
//!   benchmark schemes and half-duplex baselines.

pub mod channelgen;
pub mod error;
pub mod model;
pub mod orchestrator;
pub mod phaseopt;
pub mod units;
pub mod wmmse;

pub use error::{Error, Result};

/// Complex double used throughout the crate.
pub type C64 = num_complex::Complex64;
/// Dynamically sized complex column vector.
pub type CVector = nalgebra::DVector<C64>;
/// Dynamically sized complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
