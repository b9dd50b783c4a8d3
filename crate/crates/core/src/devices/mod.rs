//! Theoretical device models: the phase-insensitive amplifier and the one-atom laser.

mod effective;
mod laser;
mod ode;
mod pia;
mod qjump;

pub use effective::{effective_liouvillian, ExtractionMethod};
pub use laser::{annihilation, build_laser_generator, laser_rates, AtomInit, CMatrix, LaserGenerator, LaserParams, LaserRates};
pub use ode::{integrate, laser_green_ode, OdeOptions};
pub use pia::{build_pia, PiaParams};
pub use qjump::{laser_green_qjump, QjumpGreen};

use crate::special::binomial;
use nalgebra::DMatrix;

/// Photon-loss matrix with survival probability `eta`: G_km = C(m,k) ηᵏ (1−η)^(m−k).
pub fn bernoulli_matrix(dim: usize, eta: f64) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |k, m| {
        if k <= m {
            binomial(m, k) * eta.powi(k as i32) * (1.0 - eta).powi((m - k) as i32)
        } else {
            0.0
        }
    })
}
