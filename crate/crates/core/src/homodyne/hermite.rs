use std::f64::consts::PI;

/// ψ_0..=ψ_n at `x`, quadrature convention x = (a + a†)/√2.
pub fn wavefunctions(n: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let psi0 = PI.powf(-0.25) * (-0.5 * x * x).exp();
    out.push(psi0);
    if n >= 1 {
        out.push(2f64.sqrt() * x * psi0);
    }
    for j in 1..n {
        let next = (2.0 / (j + 1) as f64).sqrt() * x * out[j] - (j as f64 / (j + 1) as f64).sqrt() * out[j - 1];
        out.push(next);
    }
    out
}

/// Normalized Fock-state wavefunction ψ_n(x).
pub fn wavefunction(n: usize, x: f64) -> f64 {
    wavefunctions(n, x)[n]
}
