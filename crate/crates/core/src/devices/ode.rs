//! Adaptive Dormand–Prince 5(4) integration of the joint master equation.

use super::laser::{build_laser_generator, AtomInit, CMatrix, LaserParams};
use crate::error::{Error, Result};
use crate::fock::GreenMatrix;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, max_steps: 1_000_000 }
    }
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn cmax(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn scaled(m: &CMatrix, s: f64) -> CMatrix {
    m * Complex64::new(s, 0.0)
}

/// Integrates the autonomous system ẏ = f(y) from 0 to `t_end`.
pub fn integrate<F>(f: F, y0: CMatrix, t_end: f64, opts: &OdeOptions) -> Result<CMatrix>
where
    F: Fn(&CMatrix) -> CMatrix,
{
    if t_end == 0.0 {
        return Ok(y0);
    }
    let mut y = y0;
    let mut k1 = f(&y);
    let y_max = cmax(&y);
    let d1 = cmax(&k1).max(1e-300);
    let mut h = (0.01 * (opts.atol + y_max) / d1).min(t_end);
    let mut t = 0.0;
    let mut steps = 0;
    while t < t_end {
        if steps == opts.max_steps {
            return Err(Error::Integration { t, step: h, reason: format!("exceeded {} steps", opts.max_steps) });
        }
        steps += 1;
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        let mut k: Vec<CMatrix> = Vec::with_capacity(7);
        k.push(k1.clone());
        let combine = |k: &[CMatrix], row: &[f64]| {
            let mut yi = y.clone();
            for (kj, a) in k.iter().zip(row) {
                if *a != 0.0 {
                    yi += scaled(kj, h * a);
                }
            }
            yi
        };
        for row in &A[1..6] {
            let yi = combine(&k, row);
            k.push(f(&yi));
        }
        // The last row holds the fifth-order weights; its derivative is reused next step.
        let y_new = combine(&k, &A[6]);
        k.push(f(&y_new));
        let mut err = CMatrix::zeros(y.nrows(), y.ncols());
        for (kj, e) in k.iter().zip(&E) {
            if *e != 0.0 {
                err += scaled(kj, h * e);
            }
        }
        let mut acc = 0.0;
        for ((e, a), b) in err.iter().zip(y.iter()).zip(y_new.iter()) {
            let sc = opts.atol + opts.rtol * a.norm().max(b.norm());
            acc += (e.norm() / sc).powi(2);
        }
        let enorm = (acc / err.len() as f64).sqrt();
        if !enorm.is_finite() {
            return Err(Error::Integration { t, step: h, reason: "non-finite error estimate".into() });
        }
        let fac = if enorm == 0.0 { 5.0 } else { (0.9 * enorm.powf(-0.2)).clamp(0.2, 5.0) };
        if enorm <= 1.0 {
            t = if last { t_end } else { t + h };
            y = y_new;
            k1 = k.pop().expect("seven stages");
            h *= fac;
        } else {
            h *= fac.min(1.0);
        }
        if h < 1e-14 * t_end {
            return Err(Error::Integration { t, step: h, reason: "step size underflow".into() });
        }
    }
    Ok(y)
}

/// Green matrix of the laser from the master equation, one input photon number per column.
pub fn laser_green_ode(p: &LaserParams, dim: usize, init: AtomInit, opts: &OdeOptions) -> Result<GreenMatrix> {
    let gen = build_laser_generator(p, dim)?;
    let cols: Vec<Result<Vec<f64>>> = (0..dim)
        .into_par_iter()
        .map(|m| {
            let rho0 = gen.initial_state(init, p.sigma0, m);
            let rho = integrate(|r| gen.apply(r), rho0, p.t_star, opts)?;
            Ok(gen.photon_distribution(&rho))
        })
        .collect();
    let mut g = DMatrix::<f64>::zeros(dim, dim);
    for (m, col) in cols.into_iter().enumerate() {
        g.set_column(m, &nalgebra::DVector::from_vec(col?));
    }
    GreenMatrix::new(g, p.t_star)
}
