//! Binomial loss channel on photon-number distributions and its inverse.

use crate::error::{Error, Result};
use crate::special::binomial;
use nalgebra::DMatrix;

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidInput(format!("efficiency {eta} outside (0, 1]")));
    }
    Ok(())
}

/// r'_m = Σ_{n≥m} C(n,m) η^m (1−η)^{n−m} r_n.
pub fn bernoulli(r: &[f64], eta: f64) -> Result<Vec<f64>> {
    check_eta(eta)?;
    let q = 1.0 - eta;
    Ok((0..r.len())
        .map(|m| (m..r.len()).map(|n| binomial(n, m) * eta.powi(m as i32) * q.powi((n - m) as i32) * r[n]).sum())
        .collect())
}

/// Matrix M with r[n] = Σ_m M[n][m] r'[m] for n, m ≤ `k_max`.
pub fn inverse_bernoulli_matrix(eta: f64, k_max: usize) -> Result<DMatrix<f64>> {
    check_eta(eta)?;
    if eta <= 0.5 {
        return Err(Error::EfficiencyThreshold { eta });
    }
    let inv = 1.0 / eta;
    let q = 1.0 - inv;
    Ok(DMatrix::from_fn(k_max + 1, k_max + 1, |n, m| {
        if m < n {
            0.0
        } else {
            binomial(m, n) * inv.powi(n as i32) * q.powi((m - n) as i32)
        }
    }))
}

/// r_n = Σ_{m≥n} C(m,n) η^−n (1 − 1/η)^{m−n} r'_m, with the input truncated at `k_max`.
pub fn inverse_bernoulli(r: &[f64], eta: f64, k_max: usize) -> Result<Vec<f64>> {
    let m = inverse_bernoulli_matrix(eta, k_max)?;
    Ok((0..=k_max)
        .map(|n| (n..=k_max).map(|j| m[(n, j)] * r.get(j).copied().unwrap_or(0.0)).sum())
        .collect())
}
