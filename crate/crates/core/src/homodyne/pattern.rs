//! Diagonal pattern functions f_n with ∫ f_n(x) ψ_m(x)² dx = δ_nm.
//!
//! Primary route: f_n(x) = ∫₀^∞ k cos(kx) e^(−k²/4) L_n(k²/2) dk, evaluated by
//! composite Gauss–Legendre quadrature in k. Independent route for |x| ≲ 3.5:
//! f_n = ∂_x(ψ_n φ_n) with φ_n the irregular solution of the same recurrence.

use super::hermite::wavefunctions;
use crate::special::{dawson, gauss_legendre};
use std::f64::consts::PI;

const PANEL_WIDTH: f64 = 0.5;
const PANEL_NODES: usize = 16;
/// Largest |x| for which the irregular-solution recurrence is trusted.
pub const RECURRENCE_LIMIT: f64 = 3.5;

/// Precomputed k-quadrature for f_0..=f_{n_max}.
#[derive(Debug, Clone)]
pub struct PatternQuadrature {
    n_max: usize,
    k: Vec<f64>,
    /// weights[node * (n_max + 1) + n] = w · k · e^(−k²/4) · L_n(k²/2)
    weights: Vec<f64>,
}

/// ln of the bound Σ_j C(n,j) y^j / j! ≥ |L_n(y)| times k e^(−k²/4).
fn log_tail_bound(n: usize, k: f64) -> f64 {
    let y = 0.5 * k * k;
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    for j in 1..=n {
        term *= (n + 1 - j) as f64 / j as f64 * y / j as f64;
        sum += term;
    }
    k.ln() - 0.25 * k * k + sum.ln()
}

impl PatternQuadrature {
    pub fn new(n_max: usize) -> Self {
        let mut upper = 4.0;
        while log_tail_bound(n_max, upper) > -42.0 {
            upper += PANEL_WIDTH;
        }
        let panels = (upper / PANEL_WIDTH).ceil() as usize;
        let (gx, gw) = gauss_legendre(PANEL_NODES);
        let stride = n_max + 1;
        let mut k = Vec::with_capacity(panels * PANEL_NODES);
        let mut weights = Vec::with_capacity(panels * PANEL_NODES * stride);
        for p in 0..panels {
            let a = p as f64 * PANEL_WIDTH;
            for (xi, wi) in gx.iter().zip(&gw) {
                let kk = a + 0.5 * PANEL_WIDTH * (xi + 1.0);
                let w = 0.5 * PANEL_WIDTH * wi * kk * (-0.25 * kk * kk).exp();
                let y = 0.5 * kk * kk;
                let (mut l0, mut l1) = (1.0, 1.0 - y);
                weights.push(w * l0);
                if n_max >= 1 {
                    weights.push(w * l1);
                }
                for j in 1..n_max {
                    let l2 = ((2 * j + 1) as f64 - y) * l1 / (j + 1) as f64 - j as f64 / (j + 1) as f64 * l0;
                    l0 = l1;
                    l1 = l2;
                    weights.push(w * l2);
                }
                k.push(kk);
            }
        }
        Self { n_max, k, weights }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// f_0..=f_{n_max} and their derivatives at `x`.
    pub fn eval_with_derivative(&self, x: f64) -> (Vec<f64>, Vec<f64>) {
        let stride = self.n_max + 1;
        let mut f = vec![0.0; stride];
        let mut df = vec![0.0; stride];
        for (i, kk) in self.k.iter().enumerate() {
            let (s, c) = (kk * x).sin_cos();
            let row = &self.weights[i * stride..(i + 1) * stride];
            for n in 0..stride {
                f[n] += row[n] * c;
                df[n] -= row[n] * kk * s;
            }
        }
        (f, df)
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        self.eval_with_derivative(x).0
    }
}

/// Pattern function f_n(x) by quadrature.
pub fn pattern_function(n: usize, x: f64) -> f64 {
    PatternQuadrature::new(n).eval(x)[n]
}

/// f_0..=f_n at `x` via the regular and irregular oscillator solutions.
pub fn pattern_functions_recurrence(n: usize, x: f64) -> Vec<f64> {
    let psi = wavefunctions(n + 1, x);
    let e = (0.5 * x * x).exp() * PI.powf(0.25);
    let f = dawson(x);
    let mut phi = Vec::with_capacity(n + 2);
    phi.push(2.0 * e * f);
    phi.push(-(2f64.sqrt()) * e * (1.0 - 2.0 * x * f));
    for j in 1..=n {
        let next = (2.0 / (j + 1) as f64).sqrt() * x * phi[j] - (j as f64 / (j + 1) as f64).sqrt() * phi[j - 1];
        phi.push(next);
    }
    (0..=n)
        .map(|j| 2.0 * x * psi[j] * phi[j] - (2.0 * (j + 1) as f64).sqrt() * (psi[j + 1] * phi[j] + psi[j] * phi[j + 1]))
        .collect()
}

/// Large-|x| expansion f_n ~ Σ_j (−1)^(j+1) (2j+1)! a_j / x^(2j+2), where a_j is the
/// coefficient of k^(2j+1) in k e^(−k²/4) L_n(k²/2). Summed to its smallest term.
pub fn pattern_asymptotic(n: usize, x: f64) -> f64 {
    let y = 1.0 / (x * x);
    // c_l: coefficient of k^(2l) in L_n(k²/2)
    let mut c = vec![1.0_f64];
    for l in 1..=n {
        let prev = c[l - 1];
        c.push(-prev * (n + 1 - l) as f64 / (l * l) as f64 * 0.5);
    }
    let mut sum = 0.0;
    let mut last = f64::INFINITY;
    let mut fact = 1.0; // (2j+1)!
    let mut xpow = y; // x^−(2j+2)
    let mut e = vec![1.0_f64]; // coefficient of k^(2i) in e^(−k²/4)
    for j in 0..64 {
        if j > 0 {
            let prev = e[j - 1];
            e.push(-0.25 * prev / j as f64);
            fact *= (2 * j) as f64 * (2 * j + 1) as f64;
            xpow *= y;
        }
        let a: f64 = (0..=j.min(n)).map(|l| c[l] * e[j - l]).sum();
        // magnitude without cancellation inside a_j decides where the series stops
        let size = fact * xpow * (0..=j.min(n)).map(|l| (c[l] * e[j - l]).abs()).sum::<f64>();
        if size > last {
            break;
        }
        sum += if j % 2 == 0 { -1.0 } else { 1.0 } * fact * a * xpow;
        last = size;
        if last < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// Tabulated f_0..=f_{n_max} on x ≥ 0 with cubic Hermite interpolation.
#[derive(Debug, Clone)]
pub struct PatternTable {
    n_max: usize,
    h: f64,
    x_max: f64,
    /// Per grid point: n_max + 1 values followed by n_max + 1 derivatives.
    data: Vec<f64>,
}

impl PatternTable {
    pub const DEFAULT_STEP: f64 = 0.0025;

    pub fn new(n_max: usize) -> Self {
        Self::with_step(n_max, Self::DEFAULT_STEP)
    }

    pub fn with_step(n_max: usize, h: f64) -> Self {
        use rayon::prelude::*;
        let x_max = (2.0 * n_max as f64 + 1.0).sqrt() + 10.0;
        let points = (x_max / h).ceil() as usize + 1;
        let quad = PatternQuadrature::new(n_max);
        let data: Vec<f64> = (0..points)
            .into_par_iter()
            .flat_map_iter(|i| {
                let (f, df) = quad.eval_with_derivative(i as f64 * h);
                f.into_iter().chain(df)
            })
            .collect();
        Self { n_max, h, x_max: (points - 1) as f64 * h, data }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    /// Writes f_0..=f_{n_max}(x) into `out`.
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        let stride = self.n_max + 1;
        let ax = x.abs();
        if ax >= self.x_max {
            for (n, o) in out.iter_mut().enumerate().take(stride) {
                *o = pattern_asymptotic(n, ax);
            }
            return;
        }
        let i = ((ax / self.h) as usize).min(self.data.len() / (2 * stride) - 2);
        let t = ax / self.h - i as f64;
        let (h00, h10, h01, h11) = {
            let t2 = t * t;
            let t3 = t2 * t;
            (2.0 * t3 - 3.0 * t2 + 1.0, t3 - 2.0 * t2 + t, -2.0 * t3 + 3.0 * t2, t3 - t2)
        };
        let a = &self.data[i * 2 * stride..(i + 1) * 2 * stride];
        let b = &self.data[(i + 1) * 2 * stride..(i + 2) * 2 * stride];
        for n in 0..stride {
            out[n] = h00 * a[n] + h10 * self.h * a[stride + n] + h01 * b[n] + h11 * self.h * b[stride + n];
        }
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_max + 1];
        self.eval_into(x, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// ∫ g(x) dx over [−L, L] by composite Gauss–Legendre.
    fn integrate(l: f64, panels: usize, mut g: impl FnMut(f64) -> Vec<f64>, len: usize) -> Vec<f64> {
        let (gx, gw) = gauss_legendre(20);
        let w = 2.0 * l / panels as f64;
        let mut acc = vec![0.0; len];
        for p in 0..panels {
            let a = -l + p as f64 * w;
            for (xi, wi) in gx.iter().zip(&gw) {
                let x = a + 0.5 * w * (xi + 1.0);
                for (s, v) in acc.iter_mut().zip(g(x)) {
                    *s += 0.5 * w * wi * v;
                }
            }
        }
        acc
    }

    fn biorthogonality(n_max: usize, f: impl Fn(f64) -> Vec<f64>) -> Vec<Vec<f64>> {
        let len = (n_max + 1) * (n_max + 1);
        let flat = integrate(
            14.0,
            280,
            |x| {
                let fx = f(x);
                let psi = wavefunctions(n_max, x);
                let mut out = Vec::with_capacity(len);
                for fn_ in fx.iter().take(n_max + 1) {
                    for p in &psi {
                        out.push(fn_ * p * p);
                    }
                }
                out
            },
            len,
        );
        flat.chunks(n_max + 1).map(|c| c.to_vec()).collect()
    }

    #[test]
    fn vacuum_entries() {
        let m = biorthogonality(1, |x| vec![pattern_function(0, x), pattern_function(1, x)]);
        assert!((m[0][0] - 1.0).abs() < 1e-8);
        assert!(m[0][1].abs() < 1e-8);
    }

    #[test]
    fn biorthogonal_up_to_twenty() {
        let quad = PatternQuadrature::new(20);
        let m = biorthogonality(20, |x| quad.eval(x));
        for (n, row) in m.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                let want = if n == k { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-6, "({n}, {k}) = {v}");
            }
        }
    }

    #[test]
    fn recurrence_route_agrees_with_quadrature() {
        let quad = PatternQuadrature::new(20);
        let mut x = -RECURRENCE_LIMIT;
        while x <= RECURRENCE_LIMIT {
            let a = quad.eval(x);
            let b = pattern_functions_recurrence(20, x);
            for n in 0..=20 {
                assert!((a[n] - b[n]).abs() < 1e-8 * (1.0 + a[n].abs()), "n = {n}, x = {x}: {} vs {}", a[n], b[n]);
            }
            x += 0.0731;
        }
    }

    #[test]
    fn known_values() {
        // f_0(0) = ∫ k e^(−k²/4) dk = 2 and f_n(0) = 2(−1)ⁿ.
        for n in 0..8 {
            let want = if n % 2 == 0 { 2.0 } else { -2.0 };
            assert!((pattern_function(n, 0.0) - want).abs() < 1e-12);
        }
        // f_0(x) = 2 − 4x F(x)
        for &x in &[0.5, 1.7, 4.2, 9.0] {
            assert!((pattern_function(0, x) - (2.0 - 4.0 * x * dawson(x))).abs() < 1e-12);
        }
    }

    #[test]
    fn asymptotic_tail_matches() {
        let quad = PatternQuadrature::new(12);
        for &x in &[25.0, 40.0] {
            let f = quad.eval(x);
            for (n, v) in f.iter().enumerate() {
                assert!((v - pattern_asymptotic(n, x)).abs() < 2e-7, "n = {n} x = {x}");
            }
        }
    }

    #[test]
    fn table_interpolation_accuracy() {
        let table = PatternTable::new(33);
        let quad = PatternQuadrature::new(33);
        let mut worst: f64 = 0.0;
        let mut x = 0.00137;
        while x < table.x_max() {
            let a = table.eval(-x);
            let b = quad.eval(x);
            for n in 0..=33 {
                worst = worst.max((a[n] - b[n]).abs());
            }
            x += 0.0913;
        }
        assert!(worst < 1e-6, "max interpolation error {worst}");
        let edge = quad.eval(table.x_max() + 0.5);
        let tail = table.eval(table.x_max() + 0.5);
        for n in 0..=33 {
            assert!((edge[n] - tail[n]).abs() < 1e-6, "n = {n} past the table: {} vs {}", edge[n], tail[n]);
        }
        let beyond = table.eval(table.x_max() + 1.0);
        assert_eq!(beyond[3], pattern_asymptotic(3, table.x_max() + 1.0));
    }
}
