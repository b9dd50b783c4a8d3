//! Principal matrix logarithm by inverse scaling and squaring on the complex Schur form.

use crate::error::{Error, Result};
use crate::special::gauss_legendre;
use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use std::f64::consts::PI;

type CMatrix = DMatrix<Complex64>;

/// Square roots are taken until ‖T − I‖₁ drops below this.
const SQRT_STOP: f64 = 0.25;
/// Gauss–Legendre nodes in the partial-fraction Padé approximant of log(I + X).
const PADE_NODES: usize = 8;
const MAX_SQRTS: usize = 100;
/// Relative size below which an imaginary part counts as zero in the branch check.
const BRANCH_TOL: f64 = 1e-12;

/// Schur factorization of a real matrix prepared for logarithm evaluations.
#[derive(Debug, Clone)]
pub struct SchurLog {
    q: CMatrix,
    t: CMatrix,
}

impl SchurLog {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() || n == 0 {
            return Err(Error::InvalidInput(format!("logm: expected a square matrix, got {}x{}", n, a.ncols())));
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("logm: non-finite entry".into()));
        }
        let ac = a.map(|x| Complex64::new(x, 0.0));
        let (q, mut t) = Schur::try_new(ac, f64::EPSILON, 0)
            .ok_or_else(|| Error::Internal("Schur decomposition did not converge".into()))?
            .unpack();
        for j in 0..n {
            for i in j + 1..n {
                t[(i, j)] = Complex64::new(0.0, 0.0);
            }
        }
        let scale = a.amax().max(1.0);
        for i in 0..n {
            let lam = t[(i, i)];
            if lam.norm() == 0.0 || (lam.re <= 0.0 && lam.im.abs() <= BRANCH_TOL * scale) {
                return Err(Error::BranchFailure { re: lam.re, im: lam.im });
            }
        }
        Ok(Self { q, t })
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        (0..self.t.nrows()).map(|i| self.t[(i, i)]).collect()
    }

    /// log(A), real part.
    pub fn log(&self) -> Result<DMatrix<f64>> {
        let r = log_triangular(&self.t)?;
        Ok((&self.q * r * self.q.adjoint()).map(|z| z.re))
    }

    /// Fréchet derivative of the logarithm at A in direction `e`.
    pub fn frechet(&self, e: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.t.nrows();
        let enorm = e.amax();
        if enorm == 0.0 {
            return Ok(DMatrix::zeros(n, n));
        }
        let scale = self.t.map(|z| z.norm()).amax() / enorm;
        let f = self.q.adjoint() * e.map(|x| Complex64::new(x * scale, 0.0)) * &self.q;
        let mut big = CMatrix::zeros(2 * n, 2 * n);
        big.view_mut((0, 0), (n, n)).copy_from(&self.t);
        big.view_mut((n, n), (n, n)).copy_from(&self.t);
        big.view_mut((0, n), (n, n)).copy_from(&f);
        let r = log_triangular(&big)?;
        let d = r.view((0, n), (n, n)).into_owned();
        Ok((&self.q * d * self.q.adjoint()).map(|z| z.re / scale))
    }
}

/// Principal logarithm of a real matrix with no eigenvalue on the closed negative real axis.
pub fn logm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    SchurLog::new(a)?.log()
}

/// Fréchet derivative L(A, E) of the principal logarithm.
pub fn logm_frechet(a: &DMatrix<f64>, e: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    SchurLog::new(a)?.frechet(e)
}

fn norm1(m: &CMatrix) -> f64 {
    m.column_iter().map(|c| c.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

fn sqrt_triangular(t: &CMatrix) -> CMatrix {
    let n = t.nrows();
    let mut u = CMatrix::zeros(n, n);
    for j in 0..n {
        u[(j, j)] = t[(j, j)].sqrt();
        for i in (0..j).rev() {
            let mut s = Complex64::new(0.0, 0.0);
            for k in i + 1..j {
                s += u[(i, k)] * u[(k, j)];
            }
            u[(i, j)] = (t[(i, j)] - s) / (u[(i, i)] + u[(j, j)]);
        }
    }
    u
}

fn unwinding(z: Complex64) -> f64 {
    ((z.im - PI) / (2.0 * PI)).ceil()
}

/// Divided difference of log at (l1, l2).
fn log_divided_difference(l1: Complex64, l2: Complex64) -> Complex64 {
    if l1 == l2 {
        return l1.inv();
    }
    let d = l2 - l1;
    if d.norm() > 0.5 * (l1.norm().min(l2.norm())) {
        return (l2.ln() - l1.ln()) / d;
    }
    let z = d / (l2 + l1);
    let u = unwinding(l2.ln() - l1.ln());
    (2.0 * z.atanh() + Complex64::new(0.0, 2.0 * PI * u)) / d
}

fn log_triangular(t0: &CMatrix) -> Result<CMatrix> {
    let n = t0.nrows();
    let ident = CMatrix::identity(n, n);
    let mut t = t0.clone();
    let mut s = 0;
    while norm1(&(&t - &ident)) > SQRT_STOP {
        if s == MAX_SQRTS {
            return Err(Error::Internal("logm: square-root phase did not converge".into()));
        }
        t = sqrt_triangular(&t);
        s += 1;
    }
    let x = &t - &ident;
    let (nodes, weights) = gauss_legendre(PADE_NODES);
    let mut r = CMatrix::zeros(n, n);
    for (xi, wi) in nodes.iter().zip(&weights) {
        let node = 0.5 * (xi + 1.0);
        let lhs = &ident + &x * Complex64::new(node, 0.0);
        let y = lhs
            .solve_upper_triangular(&x)
            .ok_or_else(|| Error::Internal("logm: singular Padé denominator".into()))?;
        r += y * Complex64::new(0.5 * wi, 0.0);
    }
    r *= Complex64::new(2f64.powi(s as i32), 0.0);
    for i in 0..n {
        r[(i, i)] = t0[(i, i)].ln();
    }
    for i in 0..n.saturating_sub(1) {
        r[(i, i + 1)] = t0[(i, i + 1)] * log_divided_difference(t0[(i, i)], t0[(i + 1, i + 1)]);
    }
    Ok(r)
}
