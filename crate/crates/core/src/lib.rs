//! Tracking of a mobile radio agent rigidly coupled to an extended scattering
//! body, fusing active (agent to anchor) and passive (anchor to anchor via the
//! body) range measurements.
//!
//! The crate is `no_std` and only needs `alloc`. It contains everything that
//! does not touch the file system:
//!
//! - [`model`]: domain types and exact 2-D geometry (ranges, rotations, extents).
//! - [`scenario`]: ground-truth trajectory and synthetic measurement generation.
//! - [`likelihood`]: range-noise model, unscented scatter spread, likelihood
//!   functions and association-marginalized per-step weights.
//! - [`tracker`]: the particle filter (predict, update, resample, MMSE).
//! - [`bounds`]: posterior Cramér–Rao bound for the LOS-always-available case.
#![no_std]

extern crate alloc;

pub mod bounds;
pub mod error;
pub mod likelihood;
pub mod model;
pub mod scenario;
pub mod tracker;

pub use error::{Error, Result};
pub use model::{
    AgentState, Anchor, AnchorId, ExtentModel, Mat2, Measurement, MeasurementSet, Vec2,
};
