//! Liouvillian tomography of phase-insensitive optical devices.
//!
//! A device acting on photon-number-diagonal states is probed with conditional
//! states prepared from twin beams, its output is measured by simulated homodyne
//! tomography, and the diagonal Green matrix and its generator are reconstructed
//! with propagated statistical errors.

pub mod devices;
pub mod error;
pub mod experiment;
pub mod fock;
pub mod homodyne;
pub mod json;
pub mod rng;
pub mod special;
pub mod stats;
pub mod twinbeam;

pub use error::{Error, Result};
