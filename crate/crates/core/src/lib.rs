//! Multicell massive MIMO simulation core.
//!
//! Channel models, pilot plans, channel estimators, receive combiners,
//! spectral-efficiency bounds, statistics acquisition and complexity counts.
//! Everything here is `no_std` + `alloc`; IO, parallelism and the CLI live in
//! the companion `mmimo-lab` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod acquisition;
pub mod combining;
pub mod complexity;
pub mod engine;
pub mod error;
pub mod estimation;
pub mod linalg;
pub mod math;
pub mod pilots;
pub mod quadrature;
pub mod rng;
pub mod se;
pub mod spatial;
pub mod topology;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec, Herm, HpdFactor, C64};
