//! Impedance-based attack reachable domains (ARD) and the attack penetration
//! index (API) for inverter-based resources.

pub mod ard;
pub mod dq;
pub mod error;
pub mod identification;
pub mod linalg;
pub mod network;
pub mod surrogate;

pub use error::{Error, Result};
