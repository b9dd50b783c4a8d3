//! Diagonal-sector objects on a truncated Fock space and the exp/log maps between them.
//!
//! Index convention everywhere: `g[(k, m)]` is the probability of finding `k`
//! photons at the output given `m` photons at the input.

mod csv;
mod logm;

pub use self::csv::{read_matrix_csv, write_matrix_csv, MatrixCsv};
pub use self::logm::{logm, logm_frechet, SchurLog};

use crate::error::{invalid, Error, Result};
use nalgebra::{DMatrix, DVector};

/// Default leakage tolerance for validated theoretical objects.
pub const DEFAULT_TAIL_TOL: f64 = 1e-6;
/// Slack for round-off in sign and sum checks.
pub const ROUNDING_TOL: f64 = 1e-9;

fn check_finite(what: &str, data: &[f64]) -> Result<()> {
    match data.iter().position(|x| !x.is_finite()) {
        Some(i) => invalid(format!("{what}: non-finite entry at flat index {i}")),
        None => Ok(()),
    }
}

fn check_square(what: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return invalid(format!("{what}: expected a non-empty square matrix, got {}x{}", m.nrows(), m.ncols()));
    }
    check_finite(what, m.as_slice())
}

/// Photon-number distribution of a dephased state.
#[derive(Debug, Clone, PartialEq)]
pub struct DephasedState {
    probs: Vec<f64>,
}

impl DephasedState {
    /// Validates nonnegativity and that truncation only removed probability.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return invalid("dephased state: empty probability vector");
        }
        check_finite("dephased state", &probs)?;
        if let Some(i) = probs.iter().position(|&p| p < -ROUNDING_TOL) {
            return invalid(format!("dephased state: negative probability {} at n = {i}", probs[i]));
        }
        let sum: f64 = probs.iter().sum();
        if sum > 1.0 + ROUNDING_TOL {
            return invalid(format!("dephased state: probabilities sum to {sum} > 1"));
        }
        Ok(Self { probs })
    }

    /// Like [`DephasedState::new`] but also bounds the leaked tail.
    pub fn with_tail_tol(probs: Vec<f64>, tail_tol: f64) -> Result<Self> {
        let s = Self::new(probs)?;
        if s.leakage() > tail_tol {
            return invalid(format!("dephased state: truncation leakage {:.3e} exceeds {tail_tol:.3e}", s.leakage()));
        }
        Ok(s)
    }

    /// The Fock state |n⟩⟨n|.
    pub fn fock(n: usize, dim: usize) -> Result<Self> {
        if n >= dim {
            return invalid(format!("Fock index {n} outside dimension {dim}"));
        }
        let mut probs = vec![0.0; dim];
        probs[n] = 1.0;
        Ok(Self { probs })
    }

    pub fn thermal(mean: f64, dim: usize) -> Result<Self> {
        if !(mean >= 0.0) || !mean.is_finite() {
            return invalid(format!("thermal mean {mean} must be finite and nonnegative"));
        }
        let q = mean / (1.0 + mean);
        Self::new((0..dim).map(|n| (1.0 - q) * q.powi(n as i32)).collect())
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn sum(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Probability lost past the truncation.
    pub fn leakage(&self) -> f64 {
        (1.0 - self.sum()).max(0.0)
    }

    pub fn mean_photon(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }
}

/// Estimated photon-number distribution; entries may be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedDistribution {
    pub values: Vec<f64>,
}

impl EstimatedDistribution {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

impl From<DephasedState> for EstimatedDistribution {
    fn from(s: DephasedState) -> Self {
        Self { values: s.probs }
    }
}

/// Diagonal sector of the Green superoperator at time `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct GreenMatrix {
    g: DMatrix<f64>,
    tau: f64,
}

impl GreenMatrix {
    /// Validated theoretical Green matrix: nonnegative, column sums at most one.
    pub fn new(g: DMatrix<f64>, tau: f64) -> Result<Self> {
        let out = Self::from_estimate(g, tau)?;
        for m in 0..out.dim() {
            for k in 0..out.dim() {
                if out.g[(k, m)] < -ROUNDING_TOL {
                    return invalid(format!("green matrix: negative entry {} at ({k}, {m})", out.g[(k, m)]));
                }
            }
        }
        for (m, s) in out.column_sums().iter().enumerate() {
            if *s > 1.0 + ROUNDING_TOL {
                return invalid(format!("green matrix: column {m} sums to {s} > 1"));
            }
        }
        Ok(out)
    }

    /// Unvalidated matrix such as a statistical estimate. Only shape, finiteness and `tau` are checked.
    pub fn from_estimate(g: DMatrix<f64>, tau: f64) -> Result<Self> {
        check_square("green matrix", &g)?;
        if !(tau >= 0.0) || !tau.is_finite() {
            return invalid(format!("green matrix: tau = {tau} must be finite and nonnegative"));
        }
        Ok(Self { g, tau })
    }

    pub fn identity(dim: usize, tau: f64) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim), tau)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.g
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        self.g.column_iter().map(|c| c.sum()).collect()
    }

    /// Largest probability lost by any of the first `cols` columns.
    pub fn leakage(&self, cols: usize) -> f64 {
        self.column_sums().iter().take(cols).map(|s| (1.0 - s).max(0.0)).fold(0.0, f64::max)
    }

    /// Checks trace preservation within `tail_tol` on the first `cols` columns.
    pub fn check_tail(&self, cols: usize, tail_tol: f64) -> Result<()> {
        let leak = self.leakage(cols);
        if leak > tail_tol {
            return invalid(format!("green matrix: truncation leakage {leak:.3e} exceeds {tail_tol:.3e}"));
        }
        Ok(())
    }

    /// Top-left `n`×`n` block.
    pub fn block(&self, n: usize) -> DMatrix<f64> {
        self.g.view((0, 0), (n, n)).into_owned()
    }
}

/// Generator of the diagonal-sector dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct LiouvillianMatrix {
    l: DMatrix<f64>,
}

impl LiouvillianMatrix {
    /// Validated classical generator: off-diagonals nonnegative, column sums nonpositive.
    pub fn new(l: DMatrix<f64>) -> Result<Self> {
        let out = Self::from_estimate(l)?;
        let n = out.dim();
        let scale = out.l.amax().max(1.0);
        for m in 0..n {
            for k in 0..n {
                if k != m && out.l[(k, m)] < -ROUNDING_TOL * scale {
                    return invalid(format!("liouvillian: negative off-diagonal {} at ({k}, {m})", out.l[(k, m)]));
                }
            }
        }
        for (m, s) in out.column_sums().iter().enumerate() {
            if *s > ROUNDING_TOL * scale {
                return invalid(format!("liouvillian: column {m} sums to {s} > 0"));
            }
        }
        Ok(out)
    }

    /// Unvalidated generator, e.g. a matrix logarithm of estimated data.
    pub fn from_estimate(l: DMatrix<f64>) -> Result<Self> {
        check_square("liouvillian", &l)?;
        Ok(Self { l })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { l: DMatrix::zeros(dim, dim) }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.l
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        self.l.column_iter().map(|c| c.sum()).collect()
    }

    pub fn block(&self, n: usize) -> DMatrix<f64> {
        self.l.view((0, 0), (n, n)).into_owned()
    }
}

/// Green matrix `exp(l·tau)`.
pub fn matrix_exp(l: &LiouvillianMatrix, tau: f64) -> Result<GreenMatrix> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return invalid(format!("matrix_exp: tau = {tau} must be finite and nonnegative"));
    }
    let g = (&l.l * tau).exp();
    check_finite("matrix_exp result", g.as_slice())?;
    GreenMatrix::from_estimate(g, tau)
}

/// Principal logarithm divided by the propagation time.
pub fn matrix_log(g: &GreenMatrix) -> Result<LiouvillianMatrix> {
    if !(g.tau > 0.0) {
        return invalid(format!("matrix_log: tau = {} must be positive", g.tau));
    }
    let l = logm(&g.g)? / g.tau;
    LiouvillianMatrix::from_estimate(l)
}

/// Evolves a dephased state through a Green matrix.
pub fn apply_green(g: &GreenMatrix, s: &DephasedState) -> Result<DephasedState> {
    if g.dim() != s.dim() {
        return invalid(format!("apply_green: matrix dimension {} but state dimension {}", g.dim(), s.dim()));
    }
    let out = &g.g * DVector::from_column_slice(&s.probs);
    DephasedState::new(out.as_slice().to_vec()).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::InvalidInput(format!("apply_green produced an invalid state ({msg}); is the Green matrix validated?")),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices::{build_pia, PiaParams};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const A: f64 = 0.1940;
    const B: f64 = 0.00945;

    fn pia(dim: usize) -> LiouvillianMatrix {
        build_pia(&PiaParams { a_gain: A, b_loss: B, tau: 1.0 }, dim).unwrap()
    }

    /// Scaling-and-squaring with a long Taylor series, independent of the Padé route.
    fn taylor_expm(a: &DMatrix<f64>) -> DMatrix<f64> {
        let s = (a.norm().max(1.0).log2().ceil() as i32 + 4).max(0);
        let x = a / 2f64.powi(s);
        let n = a.nrows();
        let mut term = DMatrix::<f64>::identity(n, n);
        let mut sum = term.clone();
        for j in 1..40 {
            term = &term * &x / j as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    fn mean_photon_closed_form(t: f64) -> f64 {
        A / (A - B) * ((2.0 * (A - B) * t).exp() - 1.0)
    }

    fn random_generator(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let mut l = DMatrix::<f64>::zeros(n, n);
        for m in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                if k != m {
                    let v: f64 = rng.random::<f64>() * 0.3;
                    l[(k, m)] = v;
                    s += v;
                }
            }
            l[(m, m)] = -s;
        }
        l
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let g = matrix_exp(&LiouvillianMatrix::zeros(5), 1.0).unwrap();
        assert_eq!(g.matrix(), &DMatrix::<f64>::identity(5, 5));
    }

    #[test]
    fn exp_matches_taylor_oracle_and_conserves_low_columns() {
        let l = pia(64);
        let g = matrix_exp(&l, 1.0).unwrap();
        let oracle = taylor_expm(l.matrix());
        let diff = (g.block(16) - oracle.view((0, 0), (16, 16))).amax();
        assert!(diff < 1e-12, "Padé vs Taylor: {diff}");
        for (m, s) in g.column_sums().iter().enumerate().take(9) {
            assert!(*s <= 1.0 + 1e-9 && *s >= 1.0 - 1e-6, "column {m} sums to {s}");
        }
    }

    #[test]
    fn small_truncation_leaks_from_upper_columns() {
        // At N = 16 the amplifier pushes a visible fraction of column 8 past the cut.
        let g = matrix_exp(&pia(16), 1.0).unwrap();
        let sums = g.column_sums();
        assert!(sums.iter().all(|s| *s <= 1.0 + 1e-9));
        assert!(sums[0] > 1.0 - 1e-6);
        assert!(sums[8] < 0.95);
    }

    #[test]
    fn mean_photon_follows_scalar_ode() {
        let l = pia(64);
        let vac = DephasedState::fock(0, 64).unwrap();
        for &t in &[0.1, 0.5, 1.0] {
            let g = matrix_exp(&l, t).unwrap();
            let out = apply_green(&GreenMatrix::new(g.into_matrix().map(|x| x.max(0.0)), t).unwrap(), &vac).unwrap();
            assert!((out.mean_photon() - mean_photon_closed_form(t)).abs() < 1e-6, "t = {t}");
        }
    }

    #[test]
    fn log_of_identity_is_zero() {
        let l = matrix_log(&GreenMatrix::identity(6, 1.0).unwrap()).unwrap();
        assert!(l.matrix().amax() < 1e-15);
    }

    #[test]
    fn log_recovers_pia() {
        let l = pia(16);
        let g = matrix_exp(&l, 1.0).unwrap();
        let back = matrix_log(&g).unwrap();
        let err = (back.block(12) - l.block(12)).amax();
        assert!(err < 1e-7, "max error {err}");
    }

    #[test]
    fn log_rejects_negative_eigenvalue() {
        let mut m = DMatrix::<f64>::identity(3, 3);
        m[(1, 1)] = -1.0;
        let g = GreenMatrix::from_estimate(m, 1.0).unwrap();
        assert!(matches!(matrix_log(&g), Err(Error::BranchFailure { .. })));
    }

    #[test]
    fn exp_rejects_non_finite() {
        let mut m = DMatrix::<f64>::zeros(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(LiouvillianMatrix::from_estimate(m).is_err());
        assert!(matrix_exp(&LiouvillianMatrix::zeros(2), f64::INFINITY).is_err());
    }

    #[test]
    fn apply_identity_and_dimension_mismatch() {
        let s = DephasedState::thermal(0.7, 8).unwrap();
        let out = apply_green(&GreenMatrix::identity(8, 0.0).unwrap(), &s).unwrap();
        assert_eq!(out, s);
        assert!(apply_green(&GreenMatrix::identity(7, 0.0).unwrap(), &s).is_err());
    }

    #[test]
    fn apply_pia_to_vacuum() {
        let g = matrix_exp(&pia(64), 1.0).unwrap();
        let g = GreenMatrix::new(g.into_matrix().map(|x| x.max(0.0)), 1.0).unwrap();
        let out = apply_green(&g, &DephasedState::fock(0, 64).unwrap()).unwrap();
        assert!((out.mean_photon() - mean_photon_closed_form(1.0)).abs() < 1e-6);
    }

    #[test]
    fn stochastic_matrix_preserves_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 10;
        let mut m = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random::<f64>());
        for mut c in m.column_iter_mut() {
            let s = c.sum();
            c /= s;
        }
        let g = GreenMatrix::new(m, 1.0).unwrap();
        let s = DephasedState::new(vec![1.0 / n as f64; n]).unwrap();
        assert!((apply_green(&g, &s).unwrap().sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn validation_rules() {
        assert!(DephasedState::new(vec![0.5, -0.1, 0.6]).is_err());
        assert!(DephasedState::new(vec![0.6, 0.6]).is_err());
        assert!(DephasedState::with_tail_tol(vec![0.5, 0.4], 1e-6).is_err());
        assert!(DephasedState::with_tail_tol(vec![0.5, 0.5], 1e-6).is_ok());
        let mut l = DMatrix::<f64>::zeros(2, 2);
        l[(0, 1)] = -0.1;
        l[(1, 1)] = 0.1;
        assert!(LiouvillianMatrix::new(l.clone()).is_err());
        assert!(LiouvillianMatrix::from_estimate(l).is_ok());
        assert!(GreenMatrix::new(DMatrix::from_element(2, 2, 0.7), 1.0).is_err());
        assert!(GreenMatrix::new(DMatrix::identity(2, 2), -1.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn exp_log_round_trip(seed in any::<u64>(), n in 2usize..=12, tau in 0.2f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let l = LiouvillianMatrix::new(random_generator(&mut rng, n)).unwrap();
            let g = matrix_exp(&l, tau).unwrap();
            let back = matrix_exp(&matrix_log(&g).unwrap(), tau).unwrap();
            let err = (back.matrix() - g.matrix()).abs().row_sum().amax();
            prop_assert!(err < 1e-8, "inf-norm error {}", err);
        }

        #[test]
        fn semigroup(seed in any::<u64>(), n in 2usize..=16, t1 in 0.0f64..1.5, t2 in 0.0f64..1.5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let l = LiouvillianMatrix::new(random_generator(&mut rng, n)).unwrap();
            let lhs = matrix_exp(&l, t1 + t2).unwrap();
            let rhs = matrix_exp(&l, t1).unwrap().into_matrix() * matrix_exp(&l, t2).unwrap().into_matrix();
            prop_assert!((lhs.matrix() - rhs).amax() < 1e-9);
        }

        #[test]
        fn exp_is_positive_and_substochastic(seed in any::<u64>(), n in 2usize..=16, t in 0.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let l = LiouvillianMatrix::new(random_generator(&mut rng, n)).unwrap();
            let g = matrix_exp(&l, t).unwrap();
            prop_assert!(g.matrix().min() > -1e-12);
            prop_assert!(g.column_sums().iter().all(|s| *s <= 1.0 + 1e-9));
        }
    }
}
