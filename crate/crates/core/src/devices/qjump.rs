//! Monte Carlo wave-function unraveling of the laser master equation.

use super::laser::{build_laser_generator, AtomInit, CMatrix, LaserGenerator, LaserParams};
use crate::error::{invalid, Result};
use crate::fock::GreenMatrix;
use crate::rng::{stream_id, substream};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

type CVector = DVector<Complex64>;

/// Levels of the dyadic propagator ladder; the finest step is t*/2^LEVELS.
const LEVELS: u32 = 32;

/// Quantum-jump estimate of the Green matrix with per-entry standard errors.
#[derive(Debug, Clone)]
pub struct QjumpGreen {
    pub green: GreenMatrix,
    pub stderr: DMatrix<f64>,
    pub n_traj: usize,
    pub jumps: u64,
}

struct Propagator {
    /// ladder[j] = exp(-i H_eff t*/2^j)
    ladder: Vec<CMatrix>,
    collapse: Vec<CMatrix>,
}

impl Propagator {
    fn new(gen: &LaserGenerator, t_star: f64) -> Self {
        let ladder = (0..=LEVELS)
            .map(|j| (gen.drift() * Complex64::new(t_star / 2f64.powi(j as i32), 0.0)).exp())
            .collect();
        Self { ladder, collapse: gen.collapse.clone() }
    }

    /// One trajectory from `psi` over [0, t*]; returns the final normalized state and jump count.
    fn run<R: Rng>(&self, mut psi: CVector, rng: &mut R) -> (CVector, u64) {
        let total: u64 = 1 << LEVELS;
        let mut elapsed: u64 = 0;
        let mut jumps = 0;
        let mut threshold: f64 = rng.random();
        loop {
            // Greedy descent: largest dyadic steps that keep the squared norm above the threshold.
            for j in 0..=LEVELS {
                let ticks = 1u64 << (LEVELS - j);
                if ticks > total - elapsed {
                    continue;
                }
                let trial = &self.ladder[j as usize] * &psi;
                if trial.norm_squared() > threshold {
                    psi = trial;
                    elapsed += ticks;
                }
            }
            if elapsed == total {
                break;
            }
            let weights: Vec<f64> = self.collapse.iter().map(|c| (c * &psi).norm_squared()).collect();
            let sum: f64 = weights.iter().sum();
            if sum <= 0.0 {
                // No channel can fire; the threshold is only reachable through round-off.
                threshold = 0.0;
                continue;
            }
            let mut u = rng.random::<f64>() * sum;
            let mut channel = weights.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if u < *w {
                    channel = i;
                    break;
                }
                u -= w;
            }
            psi = &self.collapse[channel] * &psi;
            let norm = psi.norm();
            psi /= Complex64::new(norm, 0.0);
            jumps += 1;
            threshold = rng.random();
        }
        let norm = psi.norm();
        psi /= Complex64::new(norm, 0.0);
        (psi, jumps)
    }
}

/// Averages `n_traj` trajectories per input photon number. Trajectory `i` of column `m`
/// draws from its own random substream, so the output does not depend on the thread count.
pub fn laser_green_qjump(p: &LaserParams, dim: usize, init: AtomInit, n_traj: usize, seed: u64) -> Result<QjumpGreen> {
    if n_traj == 0 {
        return invalid("qjump: n_traj must be at least 1");
    }
    let gen = build_laser_generator(p, dim)?;
    let prop = Propagator::new(&gen, p.t_star);
    let pe = init.excited_probability(p.sigma0);
    let columns: Vec<(Vec<f64>, Vec<f64>, u64)> = (0..dim)
        .into_par_iter()
        .map(|m| {
            let per_traj: Vec<(Vec<f64>, u64)> = (0..n_traj)
                .into_par_iter()
                .map(|i| {
                    let mut rng = substream(seed, stream_id(m as u32, i as u32));
                    let excited = match init {
                        AtomInit::Excited => true,
                        AtomInit::Ground => false,
                        AtomInit::InversionSteadyState => rng.random::<f64>() < pe,
                    };
                    let mut psi = CVector::from_element(2 * dim, Complex64::new(0.0, 0.0));
                    psi[if excited { dim + m } else { m }] = Complex64::new(1.0, 0.0);
                    let (psi, jumps) = prop.run(psi, &mut rng);
                    let probs = (0..dim).map(|k| psi[k].norm_sqr() + psi[dim + k].norm_sqr()).collect();
                    (probs, jumps)
                })
                .collect();
            let mut mean = vec![0.0; dim];
            let mut m2 = vec![0.0; dim];
            let mut jumps = 0;
            for (count, (probs, j)) in per_traj.iter().enumerate() {
                jumps += j;
                // Welford update in trajectory order.
                for k in 0..dim {
                    let d = probs[k] - mean[k];
                    mean[k] += d / (count + 1) as f64;
                    m2[k] += d * (probs[k] - mean[k]);
                }
            }
            let n = n_traj as f64;
            let se = m2
                .iter()
                .map(|v| if n_traj > 1 { (v / (n - 1.0) / n).sqrt() } else { 0.0 })
                .map(|s| s.max(1.0 / n))
                .collect();
            (mean, se, jumps)
        })
        .collect();
    let mut g = DMatrix::zeros(dim, dim);
    let mut stderr = DMatrix::zeros(dim, dim);
    let mut jumps = 0;
    for (m, (mean, se, j)) in columns.into_iter().enumerate() {
        g.set_column(m, &DVector::from_vec(mean));
        stderr.set_column(m, &DVector::from_vec(se));
        jumps += j;
    }
    Ok(QjumpGreen { green: GreenMatrix::new(g, p.t_star)?, stderr, n_traj, jumps })
}
