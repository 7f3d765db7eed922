//! Link-level building blocks for uplink cell-free massive MIMO with pilot
//! contamination: scenario generation, pilot-based and genie-aided MMSE
//! channel estimation, a linear MMSE detector, the bilinear expectation
//! propagation receiver for joint channel estimation and data detection, and
//! the per-UE contamination metric.
//!
//! The crate is `no_std` and needs only `alloc`. Randomness always comes from
//! a caller-supplied [`rand::Rng`], so every routine is a pure function of its
//! inputs and the generator state.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod baseline;
pub mod ep;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod units;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, C64};
