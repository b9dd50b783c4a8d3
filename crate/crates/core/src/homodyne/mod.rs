//! Simulated homodyne detection of dephased states and pattern-function estimation
//! of photon-number distributions.
//!
//! Quadratures follow x = (a + a†)/√2, so the vacuum variance is 1/2. Detector loss is
//! compensated after estimation by inverting the binomial loss channel, which on the
//! diagonal sector is equivalent to using efficiency-dependent kernels.

mod bernoulli;
mod estimator;
mod hermite;
mod pattern;
mod sampler;

pub use bernoulli::{bernoulli, inverse_bernoulli, inverse_bernoulli_matrix};
pub use estimator::{estimate_diagonal, lossy_cutoff, DiagonalEstimate, Estimator};
pub use hermite::{wavefunction, wavefunctions};
pub use pattern::{pattern_asymptotic, pattern_function, pattern_functions_recurrence, PatternQuadrature, PatternTable, RECURRENCE_LIMIT};
pub use sampler::{cumulative, sample_quadrature, QuadratureSampler};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomodyneConfig {
    /// Homodyne quantum efficiency, must exceed 1/2.
    pub eta_h: f64,
    /// Largest Fock index estimated.
    pub k_max: usize,
    pub samples_per_state: u64,
    pub blocks: usize,
}

impl HomodyneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_h <= 1.0) || !self.eta_h.is_finite() {
            return Err(Error::InvalidInput(format!("homodyne.eta_h = {} must lie in (0.5, 1]", self.eta_h)));
        }
        if self.eta_h <= 0.5 {
            return Err(Error::EfficiencyThreshold { eta: self.eta_h });
        }
        if self.blocks < 2 {
            return Err(Error::InvalidInput(format!("homodyne.blocks = {} must be at least 2", self.blocks)));
        }
        Ok(())
    }

    /// Samples in block `b`; the remainder of an uneven split goes to the first blocks.
    pub fn block_len(&self, b: usize) -> u64 {
        let base = self.samples_per_state / self.blocks as u64;
        base + u64::from((b as u64) < self.samples_per_state % self.blocks as u64)
    }
}

/// Quadrature outcomes of one statistical block for one conditioning outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureBatch {
    pub samples: Vec<f64>,
    pub block_id: usize,
    pub outcome_n: usize,
}

impl QuadratureBatch {
    pub fn new(samples: Vec<f64>, block_id: usize, outcome_n: usize) -> Result<Self> {
        if let Some(x) = samples.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite quadrature {x} in block {block_id}")));
        }
        Ok(Self { samples, block_id, outcome_n })
    }
}
