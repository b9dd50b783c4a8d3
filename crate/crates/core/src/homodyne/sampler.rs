//! Quadrature sampling from dephased states through a lossy homodyne detector.

use super::hermite::wavefunctions;
use crate::fock::DephasedState;
use crate::special::gauss_legendre;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const NODES: usize = 4096;
const CELL_QUADRATURE: usize = 8;

/// Inverse-CDF sampler for ψ_n(x)² on [−x_max, x_max], x_max = √(2n+1) + 6.
#[derive(Debug, Clone)]
struct FockSampler {
    x0: f64,
    h: f64,
    cdf: Vec<f64>,
    density: Vec<f64>,
}

impl FockSampler {
    fn new(n: usize) -> Self {
        let x_max = (2.0 * n as f64 + 1.0).sqrt() + 6.0;
        let h = 2.0 * x_max / (NODES - 1) as f64;
        let (gx, gw) = gauss_legendre(CELL_QUADRATURE);
        let dens = |x: f64| {
            let p = wavefunctions(n, x)[n];
            p * p
        };
        let xs: Vec<f64> = (0..NODES).map(|i| -x_max + i as f64 * h).collect();
        let density: Vec<f64> = xs.iter().map(|&x| dens(x)).collect();
        let mut cdf = Vec::with_capacity(NODES);
        cdf.push(0.0);
        for i in 0..NODES - 1 {
            let cell: f64 = gx.iter().zip(&gw).map(|(t, w)| 0.5 * h * w * dens(xs[i] + 0.5 * h * (t + 1.0))).sum();
            cdf.push(cdf[i] + cell);
        }
        let total = cdf[NODES - 1];
        for c in &mut cdf {
            *c /= total;
        }
        let density = density.into_iter().map(|d| d / total).collect();
        Self { x0: -x_max, h, cdf, density }
    }

    /// Cubic Hermite interpolation of the CDF inverted by safeguarded Newton steps.
    fn invert(&self, u: f64) -> f64 {
        let i = match self.cdf.binary_search_by(|c| c.total_cmp(&u)) {
            Ok(i) => return self.x0 + i as f64 * self.h,
            Err(i) => i.clamp(1, NODES - 1) - 1,
        };
        let (c0, c1) = (self.cdf[i], self.cdf[i + 1]);
        let (d0, d1) = (self.density[i] * self.h, self.density[i + 1] * self.h);
        let cdf_at = |t: f64| {
            let t2 = t * t;
            let t3 = t2 * t;
            (2.0 * t3 - 3.0 * t2 + 1.0) * c0 + (t3 - 2.0 * t2 + t) * d0 + (-2.0 * t3 + 3.0 * t2) * c1 + (t3 - t2) * d1
        };
        let slope_at = |t: f64| {
            let t2 = t * t;
            (6.0 * t2 - 6.0 * t) * c0 + (3.0 * t2 - 4.0 * t + 1.0) * d0 + (-6.0 * t2 + 6.0 * t) * c1 + (3.0 * t2 - 2.0 * t) * d1
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        for _ in 0..30 {
            let r = cdf_at(t) - u;
            if r > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let s = slope_at(t);
            let mut next = if s > 0.0 { t - r / s } else { 0.5 * (lo + hi) };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - t).abs() < 1e-14 {
                t = next;
                break;
            }
            t = next;
        }
        self.x0 + (i as f64 + t) * self.h
    }
}

/// Samplers for ψ_0..ψ_{dim−1} plus the state-independent loss model.
#[derive(Debug, Clone)]
pub struct QuadratureSampler {
    tables: Vec<FockSampler>,
}

impl QuadratureSampler {
    pub fn new(dim: usize) -> Self {
        use rayon::prelude::*;
        Self { tables: (0..dim).into_par_iter().map(FockSampler::new).collect() }
    }

    pub fn dim(&self) -> usize {
        self.tables.len()
    }

    /// One quadrature from ψ_n(x)² at unit efficiency.
    pub fn sample_fock<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> f64 {
        self.tables[n].invert(rng.random::<f64>())
    }

    /// Draws n from the state, x from ψ_n², and mixes in vacuum noise for efficiency `eta_h`.
    pub fn sample<R: Rng + ?Sized>(&self, cumulative: &[f64], eta_h: f64, rng: &mut R) -> f64 {
        let total = *cumulative.last().expect("non-empty state");
        let u = rng.random::<f64>() * total;
        let n = cumulative.partition_point(|c| *c <= u).min(cumulative.len() - 1);
        let x = self.sample_fock(n, rng);
        let noise: f64 = StandardNormal.sample(rng);
        eta_h.sqrt() * x + (0.5 * (1.0 - eta_h)).sqrt() * noise
    }
}

/// Running sums of photon-number probabilities, used to draw n.
pub fn cumulative(probs: &[f64]) -> Vec<f64> {
    probs
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p.max(0.0);
            Some(*acc)
        })
        .collect()
}

/// Draws one homodyne outcome from `state` at efficiency `eta_h`.
pub fn sample_quadrature<R: Rng + ?Sized>(sampler: &QuadratureSampler, state: &DephasedState, eta_h: f64, rng: &mut R) -> f64 {
    sampler.sample(&cumulative(state.probs()), eta_h, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn vacuum_variance_is_loss_invariant() {
        let sampler = QuadratureSampler::new(4);
        let vac = DephasedState::fock(0, 4).unwrap();
        for (i, eta) in [1.0, 0.85, 0.6].into_iter().enumerate() {
            let mut rng = substream(1, i as u64);
            let n = 1_000_000;
            let xs: Vec<f64> = (0..n).map(|_| sample_quadrature(&sampler, &vac, eta, &mut rng)).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!((var - 0.5).abs() < 0.002, "eta {eta}: variance {var}");
        }
    }

    #[test]
    fn single_photon_second_moment() {
        let sampler = QuadratureSampler::new(4);
        let one = DephasedState::fock(1, 4).unwrap();
        let mut rng = substream(2, 0);
        let n = 1_000_000;
        let m2 = (0..n).map(|_| sample_quadrature(&sampler, &one, 1.0, &mut rng).powi(2)).sum::<f64>() / n as f64;
        assert!((m2 - 1.5).abs() < 0.005, "E[x²] = {m2}");
    }

    #[test]
    fn reproducible_stream() {
        let sampler = QuadratureSampler::new(6);
        let s = DephasedState::thermal(1.0, 6).unwrap();
        let draw = || {
            let mut rng = substream(77, 3);
            (0..100).map(|_| sample_quadrature(&sampler, &s, 0.9, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn fock_histograms_match_density() {
        let sampler = QuadratureSampler::new(6);
        let edges: Vec<f64> = (0..=60).map(|i| -6.0 + 0.2 * i as f64).collect();
        let (gx, gw) = gauss_legendre(10);
        for n in 0..=5 {
            let mut rng = substream(3, n as u64);
            let draws = 1_000_000;
            let mut counts = vec![0u64; edges.len() + 1];
            for _ in 0..draws {
                let x = sampler.sample_fock(n, &mut rng);
                counts[edges.partition_point(|e| *e <= x)] += 1;
            }
            let mut probs = Vec::new();
            for w in edges.windows(2) {
                let h = w[1] - w[0];
                probs.push(gx.iter().zip(&gw).map(|(t, wt)| {
                    let p = wavefunctions(n, w[0] + 0.5 * h * (t + 1.0))[n];
                    0.5 * h * wt * p * p
                }).sum::<f64>());
            }
            let inner: f64 = probs.iter().sum();
            let mut chi2 = 0.0;
            let mut dof = 0;
            let outer_count = counts[0] + counts[edges.len()];
            let mut cells: Vec<(u64, f64)> = counts[1..edges.len()].iter().copied().zip(probs.iter().copied()).collect();
            cells.push((outer_count, 1.0 - inner));
            for (c, p) in cells {
                let e = p * draws as f64;
                if e >= 5.0 {
                    chi2 += (c as f64 - e).powi(2) / e;
                    dof += 1;
                }
            }
            let pval = 1.0 - ChiSquared::new((dof - 1) as f64).unwrap().cdf(chi2);
            assert!(pval > 0.001, "n = {n}: chi2 {chi2} dof {dof} p {pval}");
        }
    }

    #[test]
    fn loss_equals_bernoulli_degraded_state() {
        let sampler = QuadratureSampler::new(6);
        let probs = vec![0.1, 0.2, 0.3, 0.25, 0.15, 0.0];
        let eta = 0.7;
        let lossy = crate::homodyne::bernoulli(&probs, eta).unwrap();
        let a_state = DephasedState::new(probs).unwrap();
        let b_state = DephasedState::new(lossy).unwrap();
        let mut rng = substream(8, 0);
        let a: Vec<f64> = (0..100_000).map(|_| sample_quadrature(&sampler, &a_state, eta, &mut rng)).collect();
        let b: Vec<f64> = (0..100_000).map(|_| sample_quadrature(&sampler, &b_state, 1.0, &mut rng)).collect();
        let (d, p) = crate::stats::ks_two_sample(&a, &b);
        assert!(p > 0.001, "D = {d}, p = {p}");
        // and the test has power against an unrelated state
        let c_state = DephasedState::fock(2, 6).unwrap();
        let c: Vec<f64> = (0..100_000).map(|_| sample_quadrature(&sampler, &c_state, 1.0, &mut rng)).collect();
        assert!(crate::stats::ks_two_sample(&a, &c).1 < 1e-6);
    }
}
