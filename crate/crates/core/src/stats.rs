//! Small statistical helpers for acceptance checks.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// P(X ≥ x) for X ~ χ²(dof).
pub fn chi2_survival(x: f64, dof: usize) -> f64 {
    if dof == 0 {
        return if x > 0.0 { 0.0 } else { 1.0 };
    }
    ChiSquared::new(dof as f64).map(|d| d.sf(x)).unwrap_or(f64::NAN)
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    (d, kolmogorov_q((ne + 0.12 + 0.11 / ne) * d))
}

/// Q_KS(λ) = 2 Σ_{j≥1} (−1)^(j−1) e^(−2j²λ²).
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let term = sign * (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Least-squares line through (ln x, ln y): returns (slope, intercept).
pub fn loglog_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Median of a non-empty slice.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    #[test]
    fn chi2_reference_points() {
        // χ²(1): P(X ≥ 3.841459) = 0.05; χ²(10): P(X ≥ 10) = 0.440493
        assert!((chi2_survival(3.841_458_820_694_124, 1) - 0.05).abs() < 1e-9);
        assert!((chi2_survival(10.0, 10) - 0.440_493_285_065_212_9).abs() < 1e-9);
        assert_eq!(chi2_survival(0.0, 0), 1.0);
    }

    #[test]
    fn kolmogorov_reference() {
        // Q_KS(1.36) ≈ 0.0494, Q_KS(1.63) ≈ 0.0098
        assert!((kolmogorov_q(1.36) - 0.0494).abs() < 5e-4);
        assert!((kolmogorov_q(1.63) - 0.0098).abs() < 2e-4);
    }

    #[test]
    fn ks_separates_shifted_samples() {
        let mut rng = substream(4, 0);
        let a: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>()).collect();
        let c: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>() + 0.05).collect();
        assert!(ks_two_sample(&a, &b).1 > 0.001);
        assert!(ks_two_sample(&a, &c).1 < 1e-6);
        assert_eq!(ks_two_sample(&a, &a).0, 0.0);
    }

    #[test]
    fn exact_power_law() {
        let x = [1e4, 1e5, 1e6, 1e7];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.5)).collect();
        let (s, c) = loglog_fit(&x, &y);
        assert!((s + 0.5).abs() < 1e-12);
        assert!((c - 3f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
