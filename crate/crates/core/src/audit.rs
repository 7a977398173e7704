//! Identity suites: exact relations the library must satisfy on random
//! instances, reported as pass/fail records rather than panics.

use std::f64::consts::PI;

use rand::Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fbm::{conditional_variance, cov, det_decomposition, GaussianConditioning, Hurst};
use crate::kernel::{hermite_eval, integrate_against, DecayClass, Kernel};
use crate::quad::GaussHermite;
use crate::rng::StreamId;

pub const MAX_DET_SIZE: usize = 6;
pub const DET_REL_TOL: f64 = 1e-8;
pub const RODRIGUES_TOL: f64 = 1e-8;
pub const ORTHOGONALITY_TOL: f64 = 1e-6;
pub const DERIVATIVE_MASS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub cases: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl IdentityCheck {
    fn new(name: &str, deviations: &[f64], tolerance: f64) -> Self {
        let max_deviation = if deviations.iter().any(|d| d.is_nan()) {
            f64::NAN
        } else {
            deviations.iter().fold(0.0f64, |m, &d| m.max(d))
        };
        Self {
            name: name.to_string(),
            cases: deviations.len(),
            max_deviation,
            tolerance,
            passed: max_deviation <= tolerance,
        }
    }
}

fn random_times(rng: &mut impl Rng, count: usize) -> Vec<f64> {
    // distinct multiples of 1/500 in (0, 4], as in a moderately fine grid
    let mut ks: Vec<u32> = Vec::with_capacity(count);
    while ks.len() < count {
        let k = rng.random_range(1..2000u32);
        if !ks.contains(&k) {
            ks.push(k);
        }
    }
    ks.into_iter().map(|k| k as f64 / 500.0).collect()
}

/// Covariance symmetry, the Brownian reduction, the determinant
/// decomposition and monotonicity of conditional variances, each on
/// `samples` random instances.
pub fn fbm_identities(samples: usize, seed: u64) -> Result<Vec<IdentityCheck>> {
    let mut rng = StreamId::new(seed, 0).rng();
    let half = Hurst::new(0.5)?;
    let (mut sym, mut brown, mut det, mut mono) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for _ in 0..samples {
        let h = Hurst::new(rng.random_range(0.05..0.95))?;
        let s = rng.random_range(0.0..4.0);
        let t = rng.random_range(0.0..4.0);
        sym.push((cov(s, t, h)? - cov(t, s, h)?).abs());
        let m = s.min(t);
        brown.push((cov(s, t, half)? - m).abs() / m.max(1e-300));

        let size = rng.random_range(1..=MAX_DET_SIZE);
        let times = random_times(&mut rng, size);
        let hd = Hurst::new([0.2, 0.5, 0.8][rng.random_range(0..3usize)])?;
        let d = det_decomposition(&times, hd)?;
        det.push((d.det - d.product_of_conditional_variances).abs() / d.det.abs().max(1e-300));

        let target = rng.random_range(1..2000u32) as f64 / 500.0 + 1e-3;
        let cut = rng.random_range(0..=size);
        let small = GaussianConditioning::new(target, times[..cut].to_vec(), h)?;
        let large = GaussianConditioning::new(target, times, h)?;
        mono.push((conditional_variance(&large)? - conditional_variance(&small)?).max(0.0));
    }
    Ok(vec![
        IdentityCheck::new("covariance_symmetry", &sym, 0.0),
        IdentityCheck::new("brownian_reduction", &brown, 1e-12),
        IdentityCheck::new("determinant_decomposition", &det, DET_REL_TOL),
        IdentityCheck::new("conditional_variance_monotone", &mono, 1e-10),
    ])
}

/// `q`-th derivative of an analytic function from samples on a unit circle
/// around `x` (trapezoid rule in the angle).
fn contour_derivative(f: impl Fn(Complex64) -> Complex64, x: f64, q: usize) -> f64 {
    let points = 64;
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..points {
        let theta = 2.0 * PI * k as f64 / points as f64;
        acc += f(Complex64::new(x, 0.0) + Complex64::from_polar(1.0, theta)) * Complex64::from_polar(1.0, -(q as f64) * theta);
    }
    let fact: f64 = (1..=q).map(|k| k as f64).product();
    (acc / points as f64).re * fact
}

/// Kernels whose derivatives are checked to integrate to zero.
pub fn derivative_catalogue() -> Vec<Kernel> {
    let mut v = vec![Kernel::AffineGaussian, Kernel::Bump, Kernel::BumpDeriv, Kernel::Cauchy];
    for (order, eps) in [(1, 1.0), (2, 0.3)] {
        v.push(Kernel::gaussian_deriv(order, eps).expect("valid width"));
    }
    for eps in [1.0, 0.05] {
        v.push(Kernel::gaussian(eps).expect("valid width"));
    }
    v
}

/// Hermite recurrence against the Rodrigues formula for `q <= 5`,
/// correlated orthogonality `E[He_q(Y1) He_r(Y2)] = 1{q=r} q! rho^q` for
/// `q, r <= 4`, and `int g^(j) = 0` over [`derivative_catalogue`].
pub fn hermite_identities() -> Result<Vec<IdentityCheck>> {
    let mut rod = Vec::new();
    let gauss = |z: Complex64| (-0.5 * z * z).exp();
    for q in 0..=5 {
        for x in [-2.2f64, -1.7, -0.6, 0.0, 0.4, 1.3, 2.2] {
            let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
            let rodrigues = sign * (0.5 * x * x).exp() * contour_derivative(gauss, x, q);
            rod.push((rodrigues - hermite_eval(q, x)).abs());
        }
    }

    let gh = GaussHermite::new(20);
    let mut orth = Vec::new();
    for rho in [-0.5f64, 0.0, 0.3, 0.7] {
        let tail = (1.0 - rho * rho).sqrt();
        for q in 0..=4 {
            for r in 0..=4 {
                let mut acc = 0.0;
                for (&y, &wy) in gh.nodes.iter().zip(&gh.weights) {
                    for (&z, &wz) in gh.nodes.iter().zip(&gh.weights) {
                        acc += wy * wz * hermite_eval(q, y) * hermite_eval(r, rho * y + tail * z);
                    }
                }
                let fact: f64 = (1..=q).map(|k| k as f64).product();
                let expected = if q == r { fact * rho.powi(q as i32) } else { 0.0 };
                orth.push((acc - expected).abs());
            }
        }
    }

    let mut mass = Vec::new();
    for k in derivative_catalogue() {
        for j in 1..=k.max_derivative_order() {
            // |g^(j)(x)| = O(|x|^-(2+j)) for the Cauchy kernel
            let decay = match k.decay_class() {
                DecayClass::Polynomial(_) => 2.0 + j as f64,
                _ => f64::INFINITY,
            };
            mass.push(integrate_against(&k, |x| k.deriv_unchecked(j, x), decay)?.value.abs());
        }
    }

    Ok(vec![
        IdentityCheck::new("hermite_rodrigues", &rod, RODRIGUES_TOL),
        IdentityCheck::new("hermite_orthogonality", &orth, ORTHOGONALITY_TOL),
        IdentityCheck::new("derivative_mass_zero", &mass, DERIVATIVE_MASS_TOL),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fbm_identities_pass() {
        let checks = fbm_identities(500, 3).unwrap();
        assert_eq!(checks.len(), 4);
        for c in &checks {
            assert!(c.passed, "{c:?}");
            assert_eq!(c.cases, 500);
        }
    }

    #[test]
    fn hermite_identities_pass() {
        for c in hermite_identities().unwrap() {
            assert!(c.passed, "{c:?}");
        }
    }

    #[test]
    fn nan_deviation_fails() {
        let c = IdentityCheck::new("x", &[0.0, f64::NAN, 0.0], 1.0);
        assert!(!c.passed);
    }
}
