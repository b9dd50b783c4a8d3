use crate::error::{invalid, Result};
use crate::fock::LiouvillianMatrix;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Phase-insensitive amplifier L = 2{A D[a†] + B D[a]}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiaParams {
    pub a_gain: f64,
    pub b_loss: f64,
    pub tau: f64,
}

impl PiaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_gain >= 0.0 && self.a_gain.is_finite()) {
            return invalid(format!("pia: gain A = {} must be finite and nonnegative", self.a_gain));
        }
        if !(self.b_loss >= 0.0 && self.b_loss.is_finite()) {
            return invalid(format!("pia: loss B = {} must be finite and nonnegative", self.b_loss));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return invalid(format!("pia: tau = {} must be finite and positive", self.tau));
        }
        Ok(())
    }
}

/// Tridiagonal diagonal-sector generator of the amplifier on `dim` Fock levels.
pub fn build_pia(p: &PiaParams, dim: usize) -> Result<LiouvillianMatrix> {
    p.validate()?;
    if dim < 2 {
        return invalid(format!("pia: dimension {dim} must be at least 2"));
    }
    let mut l = DMatrix::<f64>::zeros(dim, dim);
    for m in 0..dim {
        let up = 2.0 * p.a_gain * (m + 1) as f64;
        let down = 2.0 * p.b_loss * m as f64;
        if m + 1 < dim {
            l[(m + 1, m)] = up;
        }
        if m > 0 {
            l[(m - 1, m)] = down;
        }
        l[(m, m)] = -(up + down);
    }
    LiouvillianMatrix::new(l)
}
