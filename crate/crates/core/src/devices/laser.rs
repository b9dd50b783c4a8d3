use crate::error::{invalid, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub type CMatrix = DMatrix<Complex64>;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// One-atom laser in dimensionless form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaserParams {
    /// Cooperativity C = g²/(γγ⊥).
    pub c_coop: f64,
    /// Saturation photon number n_s = γ∥γ⊥/(4g²).
    pub n_sat: f64,
    /// Unsaturated inversion σ₀.
    pub sigma0: f64,
    /// f = γ∥/(2γ⊥).
    pub f_ratio: f64,
    /// Cavity decay rate γ.
    pub gamma_cav: f64,
    /// Time at which the atom is traced out.
    pub t_star: f64,
    /// Replaces the coupling derived from C (for example g = 0).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_override: Option<f64>,
}

/// Physical rates derived from [`LaserParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserRates {
    pub g: f64,
    pub gamma_perp: f64,
    pub gamma_par: f64,
}

impl LaserParams {
    pub fn fig4() -> Self {
        Self { c_coop: 12.0, n_sat: 7.0, sigma0: 1.0, f_ratio: 1.0, gamma_cav: 1.0, t_star: 0.0115, g_override: None }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [("C", self.c_coop), ("n_s", self.n_sat), ("f", self.f_ratio), ("gamma", self.gamma_cav)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(format!("laser: {name} = {v} must be finite and positive"));
            }
        }
        if self.f_ratio > 1.0 {
            return invalid(format!("laser: f = {} > 1 makes the σz dephasing rate negative", self.f_ratio));
        }
        if !(-1.0..=1.0).contains(&self.sigma0) {
            return invalid(format!("laser: sigma0 = {} outside [-1, 1]", self.sigma0));
        }
        if !(self.t_star >= 0.0 && self.t_star.is_finite()) {
            return invalid(format!("laser: t_star = {} must be finite and nonnegative", self.t_star));
        }
        if let Some(g) = self.g_override {
            if !g.is_finite() {
                return invalid("laser: g_override must be finite");
            }
        }
        Ok(())
    }
}

/// Solves C = g²/(γγ⊥), n_s = γ∥γ⊥/(4g²), f = γ∥/(2γ⊥) for (g, γ⊥, γ∥).
pub fn laser_rates(p: &LaserParams) -> Result<LaserRates> {
    p.validate()?;
    let gamma_perp = 2.0 * p.c_coop * p.gamma_cav * p.n_sat / p.f_ratio;
    let gamma_par = 2.0 * p.f_ratio * gamma_perp;
    let g = p.g_override.unwrap_or_else(|| (p.c_coop * p.gamma_cav * gamma_perp).sqrt());
    let slowest = gamma_par.max(gamma_perp);
    if p.t_star * slowest > 50.0 {
        log::warn!("laser: t* max(γ∥, γ⊥) = {:.1}; the atom has long relaxed before trace-out", p.t_star * slowest);
    }
    Ok(LaserRates { g, gamma_perp, gamma_par })
}

/// Initial atomic state before the field interaction starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AtomInit {
    #[default]
    Excited,
    Ground,
    /// Steady state of the pump and decay terms alone, P_e = (1 + σ₀)/2.
    InversionSteadyState,
}

impl AtomInit {
    pub fn excited_probability(self, sigma0: f64) -> f64 {
        match self {
            AtomInit::Excited => 1.0,
            AtomInit::Ground => 0.0,
            AtomInit::InversionSteadyState => 0.5 * (1.0 + sigma0),
        }
    }
}

/// Joint atom ⊗ cavity generator, index = atom·N + photon with atom 1 excited.
#[derive(Debug, Clone)]
pub struct LaserGenerator {
    pub dim: usize,
    pub hamiltonian: CMatrix,
    pub collapse: Vec<CMatrix>,
    /// −i H_eff with H_eff = H − (i/2) Σ c†c.
    drift: CMatrix,
}

pub fn annihilation(dim: usize) -> CMatrix {
    let mut a = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    a
}

fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

impl LaserGenerator {
    pub fn from_rates(rates: &LaserRates, sigma0: f64, gamma_cav: f64, dim: usize) -> Result<Self> {
        if dim < 2 {
            return invalid(format!("laser: dimension {dim} must be at least 2"));
        }
        let dephasing = 0.25 * (rates.gamma_perp - 0.5 * rates.gamma_par);
        if dephasing < 0.0 {
            return invalid(format!("laser: negative σz dephasing rate {dephasing}"));
        }
        let id_f = CMatrix::identity(dim, dim);
        let id_a = CMatrix::identity(2, 2);
        let mut sp = CMatrix::zeros(2, 2);
        sp[(1, 0)] = ONE;
        let sm = sp.adjoint();
        let mut sz = CMatrix::zeros(2, 2);
        sz[(1, 1)] = ONE;
        sz[(0, 0)] = -ONE;
        let a = kron(&id_a, &annihilation(dim));
        let sigma_plus = kron(&sp, &id_f);
        let sigma_minus = kron(&sm, &id_f);
        let sigma_z = kron(&sz, &id_f);

        let x = &sigma_plus * &a - &sigma_minus * a.adjoint();
        let hamiltonian = x * Complex64::new(0.0, rates.g);
        let channels = [
            (0.5 * rates.gamma_par * (1.0 + sigma0), sigma_plus),
            (0.5 * rates.gamma_par * (1.0 - sigma0), sigma_minus),
            (dephasing, sigma_z),
            (gamma_cav, a),
        ];
        let collapse: Vec<CMatrix> = channels
            .into_iter()
            .filter(|(rate, _)| *rate > 0.0)
            .map(|(rate, op)| op * Complex64::new(rate.sqrt(), 0.0))
            .collect();
        let mut k = CMatrix::zeros(2 * dim, 2 * dim);
        for c in &collapse {
            k += c.adjoint() * c;
        }
        let h_eff = &hamiltonian - k * Complex64::new(0.0, 0.5);
        let drift = h_eff * Complex64::new(0.0, -1.0);
        Ok(Self { dim, hamiltonian, collapse, drift })
    }

    /// −i H_eff.
    pub fn drift(&self) -> &CMatrix {
        &self.drift
    }

    /// Non-Hermitian effective Hamiltonian.
    pub fn effective_hamiltonian(&self) -> CMatrix {
        &self.drift * Complex64::new(0.0, 1.0)
    }

    /// ρ̇ for a joint density operator.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let jr = &self.drift * rho;
        let mut out = &jr + jr.adjoint();
        for c in &self.collapse {
            out += c * rho * c.adjoint();
        }
        out
    }

    /// Only the coherent part g[σ₊a − σ₋a†, ρ].
    pub fn apply_commutator(&self, rho: &CMatrix) -> CMatrix {
        let hr = &self.hamiltonian * rho;
        (&hr - rho * &self.hamiltonian) * Complex64::new(0.0, -1.0)
    }

    /// Dense superoperator acting on column-stacked density operators.
    pub fn superoperator(&self) -> CMatrix {
        let d = 2 * self.dim;
        let id = CMatrix::identity(d, d);
        // vec(AρB) = (Bᵀ ⊗ A) vec(ρ)
        let mut s = kron(&id, &self.drift) + kron(&self.drift.adjoint().transpose(), &id);
        for c in &self.collapse {
            s += kron(&c.adjoint().transpose(), c);
        }
        s
    }

    /// Initial joint state |atom⟩⟨atom| ⊗ |m⟩⟨m|.
    pub fn initial_state(&self, init: AtomInit, sigma0: f64, m: usize) -> CMatrix {
        let d = 2 * self.dim;
        let pe = init.excited_probability(sigma0);
        let mut rho = CMatrix::zeros(d, d);
        rho[(m, m)] = Complex64::new(1.0 - pe, 0.0);
        rho[(self.dim + m, self.dim + m)] = Complex64::new(pe, 0.0);
        rho
    }

    /// Photon-number distribution after tracing out the atom.
    pub fn photon_distribution(&self, rho: &CMatrix) -> Vec<f64> {
        (0..self.dim).map(|n| rho[(n, n)].re + rho[(self.dim + n, self.dim + n)].re).collect()
    }
}

pub fn build_laser_generator(p: &LaserParams, dim: usize) -> Result<LaserGenerator> {
    let rates = laser_rates(p)?;
    LaserGenerator::from_rates(&rates, p.sigma0, p.gamma_cav, dim)
}
