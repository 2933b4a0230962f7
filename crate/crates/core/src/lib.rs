//! Primary-user (PU) detection for wideband OFDM cognitive radios.
//!
//! Three detectors are provided, ordered by how much the sensing radio knows
//! about the PU signal:
//!
//! * [`case_a`]: known PU covariance model and band. A per-sub-carrier locally
//!   most powerful (LMP) quadratic-form test, OR-fused over the band.
//! * [`case_b`]: known band only. A matched-subspace test on the per-carrier
//!   periodogram, F-distributed under noise.
//! * [`case_c`]: nothing known. A dynamic-programming least-squares band search
//!   followed by the matched-subspace test on the estimated band.
//!
//! [`ofdm`] and [`pu_models`] synthesize post-DFT observations, [`numerics`]
//! holds the shared kernels and [`harness`] drives Monte-Carlo campaigns.

pub mod case_a;
pub mod case_b;
pub mod case_c;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod ofdm;
pub mod pu_models;

pub use error::{Result, SenseError};
pub use num_complex::Complex64;
