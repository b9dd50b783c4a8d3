use super::config::ExperimentConfig;
use super::run::{outcome_table, OutcomeEstimate};
use crate::devices::ExtractionMethod;
use crate::error::{Error, Result};
use crate::fock::SchurLog;
use crate::twinbeam::{inversion_coefficients, invert_green_adaptive};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// How the generator was extracted from Ĝ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub method: ExtractionMethod,
    /// Side of the Ĝ block the generator was extracted from.
    pub size: usize,
    /// Why the configured method was not used as is, if it was not.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
}

/// Per-column inversion diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDiagnostics {
    pub l: usize,
    /// Largest number of outcomes beyond l used by any row.
    pub terms: usize,
    pub converged: bool,
    /// Largest bound on the last retained series term over rows.
    pub last_term: f64,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub g_hat: DMatrix<f64>,
    pub g_sigma: DMatrix<f64>,
    pub l_hat: DMatrix<f64>,
    pub l_sigma: DMatrix<f64>,
    /// Covariance of the column-major compare block of L̂, when outcome covariances exist.
    pub l_cov: Option<DMatrix<f64>>,
    pub extraction: ExtractionRecord,
    pub columns: Vec<ColumnDiagnostics>,
}

/// Linear map vec(δG) ↦ vec(δL) at Ĝ for the chosen method, column-major.
fn jacobian(g: &DMatrix<f64>, method: ExtractionMethod, tau: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = g.nrows();
    match method {
        ExtractionMethod::FiniteDifference => {
            let l = (g - DMatrix::identity(n, n)) / tau;
            Ok((l, DMatrix::identity(n * n, n * n) / tau))
        }
        ExtractionMethod::MatrixLog => {
            let s = SchurLog::new(g)?;
            let l = s.log()? / tau;
            let cols: Vec<DMatrix<f64>> = (0..n * n)
                .into_par_iter()
                .map(|idx| {
                    let mut e = DMatrix::zeros(n, n);
                    e[(idx % n, idx / n)] = 1.0;
                    s.frechet(&e).map(|d| d / tau)
                })
                .collect::<Result<_>>()?;
            let mut jac = DMatrix::zeros(n * n, n * n);
            for (idx, d) in cols.iter().enumerate() {
                jac.column_mut(idx).copy_from_slice(d.as_slice());
            }
            Ok((l, jac))
        }
    }
}

/// Extracts L̂ with the configured method, shrinking the block and then falling back
/// to finite differences when the principal logarithm does not exist.
fn extract(g: &DMatrix<f64>, cfg: &ExperimentConfig, tau: f64) -> Result<(DMatrix<f64>, DMatrix<f64>, ExtractionRecord)> {
    let rc = &cfg.reconstruction;
    let size = g.nrows();
    if rc.method == ExtractionMethod::FiniteDifference {
        let (l, j) = jacobian(g, rc.method, tau)?;
        return Ok((l, j, ExtractionRecord { method: rc.method, size, fallback: None }));
    }
    let mut first_err = None;
    let smallest = if rc.allow_fallback { rc.compare() } else { size };
    for k in (smallest..=size).rev() {
        let block = g.view((0, 0), (k, k)).into_owned();
        match jacobian(&block, ExtractionMethod::MatrixLog, tau) {
            Ok((l, j)) => {
                let fallback = first_err.map(|e: Error| format!("{e}; logarithm taken on the leading {k}x{k} block"));
                return Ok((l, j, ExtractionRecord { method: ExtractionMethod::MatrixLog, size: k, fallback }));
            }
            Err(e @ Error::BranchFailure { .. }) => {
                log::warn!("logarithm of the leading {k}x{k} block of G-hat failed: {e}");
                first_err.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    let err = first_err.expect("loop ran at least once");
    if !rc.allow_fallback {
        return Err(err);
    }
    let (l, j) = jacobian(g, ExtractionMethod::FiniteDifference, tau)?;
    Ok((l, j, ExtractionRecord { method: ExtractionMethod::FiniteDifference, size, fallback: Some(format!("{err}; finite differences used")) }))
}

/// Inverts the outcome table to Ĝ and extracts L̂ with propagated errors.
pub fn reconstruct(estimates: &[OutcomeEstimate], cfg: &ExperimentConfig, tau: f64) -> Result<Reconstruction> {
    cfg.validate()?;
    let rc = &cfg.reconstruction;
    let k_size = rc.size;
    let table = outcome_table(estimates);

    // Every retained outcome a column may draw on must be present.
    let retained: BTreeSet<usize> = cfg.retained_outcomes().into_iter().collect();
    let mut missing = BTreeSet::new();
    for l in 0..k_size {
        for n in l..=l + rc.n_max {
            if retained.contains(&n) && table.get(n).is_none_or(|r| r.r.len() < k_size) {
                missing.insert(n);
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompleteData { missing: missing.into_iter().collect() });
    }

    let mut g_hat = DMatrix::zeros(k_size, k_size);
    let mut g_sigma = DMatrix::zeros(k_size, k_size);
    let mut used = DMatrix::<usize>::zeros(k_size, k_size);
    let mut columns = Vec::with_capacity(k_size);
    for l in 0..k_size {
        let mut diag = ColumnDiagnostics { l, terms: 0, converged: true, last_term: 0.0 };
        for k in 0..k_size {
            let a = invert_green_adaptive(&table, &cfg.twin_beam, l, k, rc.tail_epsilon, rc.n_max)?;
            g_hat[(k, l)] = a.value;
            g_sigma[(k, l)] = a.sigma;
            used[(k, l)] = a.n_max;
            diag.terms = diag.terms.max(a.n_max);
            diag.converged &= a.converged;
            diag.last_term = diag.last_term.max(a.last_term);
        }
        if !diag.converged {
            log::warn!("column {l}: inversion series not converged to {:.1e} (last term {:.2e})", rc.tail_epsilon, diag.last_term);
        }
        columns.push(diag);
    }

    let (l_hat, jac, extraction) = extract(&g_hat, cfg, tau)?;
    let size = extraction.size;
    let coef: Vec<Vec<f64>> = (0..size).map(|l| inversion_coefficients(&cfg.twin_beam, l, rc.n_max + 1)).collect();

    // Sensitivity of vec(Ĝ) (leading size×size block, column-major) to r_k(o).
    let dg = |o: usize, k: usize| -> Vec<(usize, f64)> {
        (0..size)
            .filter(|&l| o >= l && o - l <= used[(k, l)])
            .map(|l| (l * size + k, coef[l][o - l]))
            .collect()
    };

    // Linear propagation of per-outcome fluctuations. Block replicates carry the
    // correlations between Fock indices; tables without blocks fall back to σ_k.
    let mut l_var = DMatrix::<f64>::zeros(size, size);
    for e in estimates {
        let deviations: Vec<Vec<f64>> = if e.block_r.len() >= 2 {
            let b = e.block_r.len() as f64;
            let scale = 1.0 / (b * (b - 1.0)).sqrt();
            e.block_r.iter().map(|rb| (0..size).map(|k| (rb[k] - e.r[k]) * scale).collect()).collect()
        } else {
            (0..size).map(|k| (0..size).map(|j| if j == k { e.sigma[k] } else { 0.0 }).collect()).collect()
        };
        for d in deviations {
            let mut vg = nalgebra::DVector::<f64>::zeros(size * size);
            for (k, dk) in d.iter().enumerate() {
                for (idx, c) in dg(e.n, k) {
                    vg[idx] += c * dk;
                }
            }
            let vl = &jac * vg;
            for (idx, v) in vl.iter().enumerate() {
                l_var[(idx % size, idx / size)] += v * v;
            }
        }
    }
    let l_sigma = l_var.map(f64::sqrt);

    let l_cov = if estimates.iter().all(|e| e.cov.is_some()) && !estimates.is_empty() {
        let c = rc.compare().min(size);
        let keep: Vec<usize> = (0..c).flat_map(|j| (0..c).map(move |i| j * size + i)).collect();
        let jc = DMatrix::from_fn(keep.len(), size * size, |a, b| jac[(keep[a], b)]);
        let mut cov_g = DMatrix::<f64>::zeros(size * size, size * size);
        for e in estimates {
            let cov = e.cov.as_ref().expect("checked above");
            let mut sens = DMatrix::<f64>::zeros(size * size, size);
            for k in 0..size {
                for (idx, c) in dg(e.n, k) {
                    sens[(idx, k)] = c;
                }
            }
            let ck = DMatrix::from_fn(size, size, |i, j| cov[i][j]);
            cov_g += &sens * ck * sens.transpose();
        }
        Some(&jc * cov_g * jc.transpose())
    } else {
        None
    };

    Ok(Reconstruction {
        g_hat,
        g_sigma,
        l_hat,
        l_sigma,
        l_cov,
        extraction,
        columns,
    })
}
