//! Link-level simulation of multicast massive MIMO with user subgrouping.
//!
//! The pipeline per network snapshot is
//! [`channel_model`] (geometry, large-scale fading, covariances) →
//! [`subgrouping`] (partition users by covariance similarity) →
//! [`estimation`] (shared-pilot MMSE training) → [`precoding`] (MR / ZF) →
//! [`performance`] (Monte-Carlo gain tables, SINR, SE) →
//! [`power_control`] (pilot and downlink max-min fairness).
//! [`harness`] drives seeded campaigns of snapshots and aggregates results.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel_model;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod linalg;
pub mod performance;
pub mod power_control;
pub mod precoding;
pub mod rng;
pub mod subgrouping;

pub use error::{Error, Result};

/// Complex baseband sample type used throughout.
pub type C64 = nalgebra::Complex<f64>;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<C64>;

/// Converts a power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Converts a power in watts to dBm.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}
