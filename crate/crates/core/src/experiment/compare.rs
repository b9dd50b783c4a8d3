use crate::error::{invalid, Result};
use crate::stats::chi2_survival;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Element-wise agreement between an estimate and its theory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub elements: usize,
    pub rmse: f64,
    /// Largest finite |z|.
    pub max_abs_z: f64,
    pub within_3sigma: usize,
    pub fraction_within_3sigma: f64,
    /// (row, col) with |z| > 3, or zero sigma under a nonzero residual.
    pub flagged: Vec<(usize, usize)>,
}

/// Joint test that elements off the three main diagonals vanish.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TridiagonalTest {
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
    /// "covariance" for the full Mahalanobis form, "diagonal" when only sigmas were used.
    pub method: String,
}

/// z = (estimate − theory)/σ, `None` where σ = 0 and the residual is nonzero.
pub fn z_scores(est: &DMatrix<f64>, sigma: &DMatrix<f64>, theory: &DMatrix<f64>) -> DMatrix<Option<f64>> {
    DMatrix::from_fn(est.nrows(), est.ncols(), |i, j| {
        let r = est[(i, j)] - theory[(i, j)];
        let s = sigma[(i, j)];
        if s > 0.0 {
            Some(r / s)
        } else if r == 0.0 {
            Some(0.0)
        } else {
            None
        }
    })
}

pub fn compare(est: &DMatrix<f64>, sigma: &DMatrix<f64>, theory: &DMatrix<f64>) -> Result<CompareSummary> {
    if est.shape() != sigma.shape() || est.shape() != theory.shape() {
        return invalid(format!("compare: shapes {:?}, {:?}, {:?} differ", est.shape(), sigma.shape(), theory.shape()));
    }
    let z = z_scores(est, sigma, theory);
    let elements = est.len();
    let rmse = ((est - theory).map(|x| x * x).sum() / elements.max(1) as f64).sqrt();
    let mut flagged = Vec::new();
    let mut max_abs_z: f64 = 0.0;
    // row-major so flagged lists read naturally
    for i in 0..est.nrows() {
        for j in 0..est.ncols() {
            match z[(i, j)] {
                Some(v) => {
                    max_abs_z = max_abs_z.max(v.abs());
                    if v.abs() > 3.0 {
                        flagged.push((i, j));
                    }
                }
                None => flagged.push((i, j)),
            }
        }
    }
    let within = elements - flagged.len();
    Ok(CompareSummary {
        elements,
        rmse,
        max_abs_z,
        within_3sigma: within,
        fraction_within_3sigma: within as f64 / elements.max(1) as f64,
        flagged,
    })
}

/// Positions (i, j) with |i − j| ≥ 2 in column-major order.
pub fn off_tridiagonal(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|j| (0..n).map(move |i| (i, j))).filter(|(i, j)| i.abs_diff(*j) >= 2).collect()
}

/// χ² of the off-tridiagonal elements against zero. `cov` is the covariance of the
/// column-major vec of `est` and, when given, is used in full.
pub fn tridiagonality(est: &DMatrix<f64>, sigma: &DMatrix<f64>, cov: Option<&DMatrix<f64>>) -> Result<TridiagonalTest> {
    let n = est.nrows();
    let pos = off_tridiagonal(n);
    let dof = pos.len();
    let v = nalgebra::DVector::from_iterator(dof, pos.iter().map(|&(i, j)| est[(i, j)]));
    let (chi2, method) = match cov {
        Some(c) => {
            if c.nrows() != n * n {
                return invalid(format!("tridiagonality: covariance is {}x{}, expected {}", c.nrows(), c.ncols(), n * n));
            }
            let sub = DMatrix::from_fn(dof, dof, |a, b| {
                let (ia, ja) = pos[a];
                let (ib, jb) = pos[b];
                c[(ja * n + ia, jb * n + ib)]
            });
            let sub = (&sub + sub.transpose()) * 0.5;
            let chi2 = match sub.clone().cholesky() {
                Some(ch) => v.dot(&ch.solve(&v)),
                None => {
                    let tol = 1e-12 * sub.amax();
                    let inv = sub.pseudo_inverse(tol).map_err(|e| crate::Error::Internal(e.to_string()))?;
                    v.dot(&(inv * &v))
                }
            };
            (chi2, "covariance")
        }
        None => {
            let chi2 = pos
                .iter()
                .map(|&(i, j)| {
                    let s = sigma[(i, j)];
                    if s > 0.0 {
                        (est[(i, j)] / s).powi(2)
                    } else if est[(i, j)] == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                })
                .sum();
            (chi2, "diagonal")
        }
    };
    Ok(TridiagonalTest { chi2, dof, p_value: chi2_survival(chi2, dof), method: method.to_string() })
}
