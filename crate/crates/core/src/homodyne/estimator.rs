//! Block-averaged pattern-function estimator with loss compensation.

use super::bernoulli::inverse_bernoulli_matrix;
use super::pattern::PatternTable;
use super::{HomodyneConfig, QuadratureBatch};
use crate::error::{Error, Result};
use crate::fock::EstimatedDistribution;
use crate::special::binomial;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::collections::BTreeMap;

const MAX_PAD: usize = 24;
const PAD_TOL: f64 = 1e-10;

/// Highest lossy index estimated before compensation back to `k_max`.
///
/// Loss moves weight downward only, but the inverse channel reaches upward with
/// weights C(m, n)·((1−η)/η)^(m−n); indices are added until those fall below 1e−10.
pub fn lossy_cutoff(eta: f64, k_max: usize) -> usize {
    if eta >= 1.0 {
        return k_max;
    }
    let q = (1.0 - eta) / eta;
    let pad = (1..=MAX_PAD).find(|&j| binomial(k_max + j, k_max) * q.powi(j as i32) < PAD_TOL).unwrap_or(MAX_PAD);
    k_max + pad
}

/// Compensated photon-number estimate for one conditioning outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalEstimate {
    /// r̂_0..=r̂_{k_max} after loss compensation.
    pub r: Vec<f64>,
    /// Standard deviation over blocks divided by √blocks.
    pub sigma: Vec<f64>,
    /// Compensated per-block estimates, in block order.
    pub block_r: Vec<Vec<f64>>,
    /// Sample covariance of `r` from per-sample kernel values, when requested.
    pub cov: Option<DMatrix<f64>>,
    pub samples: u64,
}

impl DiagonalEstimate {
    pub fn distribution(&self) -> EstimatedDistribution {
        EstimatedDistribution::new(self.r.clone())
    }
}

/// Pattern table and compensation matrix for a fixed homodyne configuration.
#[derive(Debug, Clone)]
pub struct Estimator {
    cfg: HomodyneConfig,
    table: PatternTable,
    k_lossy: usize,
    compensation: DMatrix<f64>,
    with_cov: bool,
}

struct BlockSums {
    count: u64,
    sum: Vec<f64>,
    outer: Option<DMatrix<f64>>,
}

impl Estimator {
    pub fn new(cfg: &HomodyneConfig, with_cov: bool) -> Result<Self> {
        cfg.validate()?;
        let k_lossy = lossy_cutoff(cfg.eta_h, cfg.k_max);
        let full = inverse_bernoulli_matrix(cfg.eta_h, k_lossy)?;
        Ok(Self {
            cfg: *cfg,
            table: PatternTable::new(k_lossy),
            k_lossy,
            compensation: full.rows(0, cfg.k_max + 1).into_owned(),
            with_cov,
        })
    }

    pub fn config(&self) -> &HomodyneConfig {
        &self.cfg
    }

    pub fn k_lossy(&self) -> usize {
        self.k_lossy
    }

    pub fn table(&self) -> &PatternTable {
        &self.table
    }

    fn block_sums<'a>(&self, batches: impl Iterator<Item = &'a QuadratureBatch>) -> BlockSums {
        let dim = self.k_lossy + 1;
        let mut f = vec![0.0; dim];
        let mut acc = BlockSums {
            count: 0,
            sum: vec![0.0; dim],
            outer: self.with_cov.then(|| DMatrix::zeros(dim, dim)),
        };
        for b in batches {
            for &x in &b.samples {
                self.table.eval_into(x, &mut f);
                for (s, v) in acc.sum.iter_mut().zip(&f) {
                    *s += v;
                }
                if let Some(o) = acc.outer.as_mut() {
                    for j in 0..dim {
                        for i in 0..=j {
                            o[(i, j)] += f[i] * f[j];
                        }
                    }
                }
                acc.count += 1;
            }
        }
        acc
    }

    /// Estimates r̂ for one outcome from batches grouped by `block_id`.
    pub fn estimate(&self, batches: &[QuadratureBatch]) -> Result<DiagonalEstimate> {
        let mut groups: BTreeMap<usize, Vec<&QuadratureBatch>> = BTreeMap::new();
        for b in batches {
            if !b.samples.is_empty() {
                groups.entry(b.block_id).or_default().push(b);
            }
        }
        if groups.len() < 2 {
            return Err(Error::InvalidInput(format!("{} non-empty blocks; block errors need at least 2", groups.len())));
        }
        if groups.len() < self.cfg.blocks {
            log::warn!("estimate: {} non-empty blocks, configuration asks for {}", groups.len(), self.cfg.blocks);
        }
        let sums: Vec<BlockSums> = groups.values().collect::<Vec<_>>().par_iter().map(|g| self.block_sums(g.iter().copied())).collect();

        let blocks = sums.len() as f64;
        let block_r: Vec<Vec<f64>> = sums
            .iter()
            .map(|s| {
                let mean = DVector::from_iterator(s.sum.len(), s.sum.iter().map(|v| v / s.count as f64));
                (&self.compensation * mean).iter().copied().collect()
            })
            .collect();
        let k = self.cfg.k_max + 1;
        let r: Vec<f64> = (0..k).map(|i| block_r.iter().map(|b| b[i]).sum::<f64>() / blocks).collect();
        let sigma: Vec<f64> = (0..k)
            .map(|i| {
                let var = block_r.iter().map(|b| (b[i] - r[i]).powi(2)).sum::<f64>() / (blocks - 1.0);
                (var / blocks).sqrt()
            })
            .collect();
        let samples: u64 = sums.iter().map(|s| s.count).sum();

        let cov = if self.with_cov {
            let dim = self.k_lossy + 1;
            let mut outer = DMatrix::<f64>::zeros(dim, dim);
            let mut total = vec![0.0; dim];
            for s in &sums {
                outer += s.outer.as_ref().expect("requested covariance");
                for (t, v) in total.iter_mut().zip(&s.sum) {
                    *t += v;
                }
            }
            let n = samples as f64;
            let mean = DVector::from_vec(total.iter().map(|t| t / n).collect());
            let mut c = DMatrix::from_fn(dim, dim, |i, j| {
                let (a, b) = if i <= j { (i, j) } else { (j, i) };
                outer[(a, b)] / n - mean[i] * mean[j]
            });
            c *= 1.0 / (n - 1.0).max(1.0);
            Some(&self.compensation * c * self.compensation.transpose())
        } else {
            None
        };
        Ok(DiagonalEstimate { r, sigma, block_r, cov, samples })
    }
}

/// Estimates the compensated distribution and its block sigma for one outcome.
pub fn estimate_diagonal(batches: &[QuadratureBatch], cfg: &HomodyneConfig) -> Result<(EstimatedDistribution, Vec<f64>)> {
    let est = Estimator::new(cfg, false)?.estimate(batches)?;
    Ok((est.distribution(), est.sigma))
}
