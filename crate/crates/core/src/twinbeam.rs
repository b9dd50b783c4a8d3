//! Twin-beam conditional inputs and the transforms between output distributions and the Green matrix.
//!
//! With c = (η_D − 1)κ² + 1 and z = κ²(1 − η_D), outcome n at detector D
//! prepares ⟨m+n|ρ_n|m+n⟩ = c^(n+1) C(m+n, n) z^m. The device output for that
//! input is r_k(n) = Σ_m ⟨m+n|ρ_n|m+n⟩ G[k][m+n], and the inverse transform is
//! G[k][l] = c^−(l+1) Σ_n C(n+l, l) (−z/c)ⁿ r_k(n+l).

use crate::error::{invalid, Error, Result};
use crate::fock::{DephasedState, EstimatedDistribution, GreenMatrix};
use crate::special::{binomial, CompensatedSum};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwinBeamConfig {
    /// |κ|²
    pub kappa2: f64,
    /// Quantum efficiency of the conditioning detector.
    pub eta_d: f64,
    /// Largest conditioning outcome always retained.
    pub n_outcome_max: usize,
}

impl TwinBeamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.kappa2) {
            return invalid(format!("twin beam: kappa2 = {} must lie in [0, 1)", self.kappa2));
        }
        if !(self.eta_d > 0.0 && self.eta_d <= 1.0) {
            return invalid(format!("twin beam: eta_d = {} must lie in (0, 1]", self.eta_d));
        }
        Ok(())
    }

    /// c = (η_D − 1)κ² + 1
    pub fn c(&self) -> f64 {
        (self.eta_d - 1.0) * self.kappa2 + 1.0
    }

    /// z = κ²(1 − η_D)
    pub fn z(&self) -> f64 {
        self.kappa2 * (1.0 - self.eta_d)
    }

    /// Ratio of the alternating inversion series, (η_D − 1)κ²/c.
    pub fn series_ratio(&self) -> f64 {
        -self.z() / self.c()
    }
}

/// Probability of conditioning outcome `n`.
pub fn outcome_distribution(cfg: &TwinBeamConfig, n: usize) -> f64 {
    let c = cfg.c();
    (1.0 - cfg.kappa2) * (cfg.eta_d * cfg.kappa2).powi(n as i32) / c.powi(n as i32 + 1)
}

/// Photon-number distribution entering the device after outcome `n`.
pub fn conditional_state(cfg: &TwinBeamConfig, n: usize, dim: usize) -> Result<DephasedState> {
    cfg.validate()?;
    if n >= dim {
        return invalid(format!("conditional state: outcome {n} outside dimension {dim}"));
    }
    let mut probs = vec![0.0; dim];
    let (c, z) = (cfg.c(), cfg.z());
    let lead = c.powi(n as i32 + 1);
    for m in 0..dim - n {
        probs[m + n] = lead * binomial(m + n, n) * z.powi(m as i32);
    }
    DephasedState::new(probs)
}

/// Expected output distribution for outcome `n` through `g`.
pub fn predict_outputs(g: &GreenMatrix, cfg: &TwinBeamConfig, n: usize, tail_epsilon: f64) -> Result<EstimatedDistribution> {
    cfg.validate()?;
    let dim = g.dim();
    let mut r = vec![0.0; dim];
    if n >= dim {
        return Ok(EstimatedDistribution::new(r));
    }
    let (c, z) = (cfg.c(), cfg.z());
    let lead = c.powi(n as i32 + 1);
    let mut last = 0.0;
    for m in 0..dim - n {
        let w = lead * binomial(m + n, n) * z.powi(m as i32);
        last = w;
        if w == 0.0 {
            break;
        }
        for (k, rk) in r.iter_mut().enumerate() {
            *rk += w * g.matrix()[(k, m + n)];
        }
    }
    if last > tail_epsilon {
        log::warn!("predict_outputs: input weight {last:.3e} at the truncation edge for outcome {n} exceeds {tail_epsilon:.1e}");
    }
    Ok(EstimatedDistribution::new(r))
}

/// Estimated output distribution for one conditioning outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub n: usize,
    pub counts: u64,
    pub r: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Covariance of `r` across Fock indices, when the estimator provides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov: Option<Vec<Vec<f64>>>,
}

/// Map from conditioning outcome to its estimated output distribution.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutcomeTable {
    pub records: BTreeMap<usize, OutcomeRecord>,
}

impl OutcomeTable {
    pub fn insert(&mut self, rec: OutcomeRecord) {
        self.records.insert(rec.n, rec);
    }

    pub fn get(&self, n: usize) -> Option<&OutcomeRecord> {
        self.records.get(&n)
    }

    /// Noise-free table from a known Green matrix.
    pub fn from_theory(g: &GreenMatrix, cfg: &TwinBeamConfig, outcomes: impl IntoIterator<Item = usize>, tail_epsilon: f64) -> Result<Self> {
        let mut t = Self::default();
        for n in outcomes {
            let r = predict_outputs(g, cfg, n, tail_epsilon)?.values;
            let sigma = vec![0.0; r.len()];
            t.insert(OutcomeRecord { n, counts: 0, r, sigma, cov: None });
        }
        Ok(t)
    }

    /// Contiguous outcomes starting at `l`.
    pub fn coverage_from(&self, l: usize) -> usize {
        (l..).take_while(|n| self.records.contains_key(n)).count()
    }

    fn require(&self, ns: impl Iterator<Item = usize>) -> Result<()> {
        let missing: Vec<usize> = ns.filter(|n| !self.records.contains_key(n)).collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::IncompleteData { missing })
        }
    }
}

/// Weights c_n = c^−(l+1) C(n+l, l) ratioⁿ of the inversion series for column `l`.
pub fn inversion_coefficients(cfg: &TwinBeamConfig, l: usize, terms: usize) -> Vec<f64> {
    let (c, ratio) = (cfg.c(), cfg.series_ratio());
    let lead = c.powi(-(l as i32 + 1));
    (0..terms).map(|n| lead * binomial(n + l, l) * ratio.powi(n as i32)).collect()
}

fn check_ratio(cfg: &TwinBeamConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.series_ratio().abs() >= 1.0 {
        return Err(Error::InvalidInput(format!(
            "twin beam: inversion series ratio {} is not contracting (needs kappa2 (1 - eta_d) < 1/2)",
            cfg.series_ratio()
        )));
    }
    Ok(())
}

/// Sums terms by decreasing magnitude with compensation.
fn ordered_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    let mut acc = CompensatedSum::default();
    for t in terms {
        acc.add(t);
    }
    acc.value()
}

/// Reconstructs G[k][l] from outcomes l..=l+n_max.
pub fn invert_green(table: &OutcomeTable, cfg: &TwinBeamConfig, l: usize, k: usize, n_max: usize) -> Result<(f64, f64)> {
    check_ratio(cfg)?;
    table.require(l..=l + n_max)?;
    let coef = inversion_coefficients(cfg, l, n_max + 1);
    let mut terms = Vec::with_capacity(coef.len());
    let mut var = Vec::with_capacity(coef.len());
    for (n, c) in coef.iter().enumerate() {
        let rec = &table.records[&(n + l)];
        let (r, s) = (rec.r.get(k).copied().unwrap_or(0.0), rec.sigma.get(k).copied().unwrap_or(0.0));
        terms.push(c * r);
        var.push((c * s).powi(2));
    }
    Ok((ordered_sum(terms), ordered_sum(var).sqrt()))
}

/// Inversion of one element with the number of terms chosen from the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveInversion {
    pub value: f64,
    pub sigma: f64,
    /// Number of outcomes beyond `l` that entered the sum.
    pub n_max: usize,
    /// Bound |c_n|·max(|r|, σ) of the last retained term.
    pub last_term: f64,
    pub converged: bool,
}

/// Like [`invert_green`] but stops once |c_n|·max(|r_k|, σ_k) < `tail_epsilon`, at the
/// end of contiguous coverage, or at `cap` extra outcomes, whichever comes first.
pub fn invert_green_adaptive(table: &OutcomeTable, cfg: &TwinBeamConfig, l: usize, k: usize, tail_epsilon: f64, cap: usize) -> Result<AdaptiveInversion> {
    check_ratio(cfg)?;
    table.require(std::iter::once(l))?;
    let available = table.coverage_from(l).min(cap + 1);
    let coef = inversion_coefficients(cfg, l, available);
    let mut terms = Vec::new();
    let mut var = Vec::new();
    let mut last_term = f64::INFINITY;
    let mut converged = false;
    for (n, c) in coef.iter().enumerate() {
        let rec = &table.records[&(n + l)];
        let (r, s) = (rec.r.get(k).copied().unwrap_or(0.0), rec.sigma.get(k).copied().unwrap_or(0.0));
        terms.push(c * r);
        var.push((c * s).powi(2));
        last_term = c.abs() * r.abs().max(s);
        if last_term < tail_epsilon {
            converged = true;
            break;
        }
    }
    Ok(AdaptiveInversion {
        value: ordered_sum(terms.clone()),
        sigma: ordered_sum(var).sqrt(),
        n_max: terms.len() - 1,
        last_term,
        converged,
    })
}
