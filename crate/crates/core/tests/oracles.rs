//! Moment oracles against brute-force tensor Simpson sums of closed-form
//! Gaussian expressions. The brute-force side uses neither the pair-moment
//! routine nor the adaptive quadrature.

use std::f64::consts::PI;

use dltlab::fbm::{cov, Hurst};
use dltlab::oracles::{dlt_first_moment, dlt_second_moment, MomentQuery, OracleOptions};

fn simpson_weights(m: usize) -> Vec<f64> {
    assert!(m.is_multiple_of(2));
    (0..=m)
        .map(|i| if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 } / (3.0 * m as f64))
        .collect()
}

/// `E[phi_eps^(l)(X_s) phi_eta^(l)(X_r)]` for `l <= 1`: the density of
/// `(X_s + sqrt(eps) Z1, X_r + sqrt(eta) Z2)` at the origin and its mixed
/// derivative.
fn pair_expectation(ell: usize, s: f64, r: f64, eps: f64, eta: f64, h: Hurst) -> f64 {
    let c11 = cov(s, s, h).unwrap() + eps;
    let c22 = cov(r, r, h).unwrap() + eta;
    let c12 = cov(s, r, h).unwrap();
    let det = c11 * c22 - c12 * c12;
    match ell {
        0 => 1.0 / (2.0 * PI * det.sqrt()),
        1 => c12 / (2.0 * PI * det.powf(1.5)),
        _ => unreachable!(),
    }
}

fn brute_second_moment(ell: usize, hv: f64, eps: f64, eta: f64, m: usize) -> f64 {
    let h = Hurst::new(hv).unwrap();
    let w = simpson_weights(m);
    let mut total = 0.0;
    for (i, wi) in w.iter().enumerate() {
        let mut row = 0.0;
        for (j, wj) in w.iter().enumerate() {
            row += wj * pair_expectation(ell, i as f64 / m as f64, j as f64 / m as f64, eps, eta, h);
        }
        total += wi * row;
    }
    total
}

#[test]
fn second_moment_against_brute_force() {
    let opts = OracleOptions::default();
    for (ell, hv, eps, eta) in [(0, 0.5, 0.2, 0.2), (1, 0.3, 0.3, 0.3), (0, 0.7, 0.1, 0.3), (1, 0.6, 0.25, 0.15)] {
        let q = MomentQuery::new(ell, Hurst::new(hv).unwrap(), 1.0, eps).unwrap().with_eta(eta);
        let oracle = dlt_second_moment(&q, &opts).unwrap().value;
        let brute = brute_second_moment(ell, hv, eps, eta, 800);
        let rel = (oracle - brute).abs() / brute.abs();
        assert!(rel < 1e-4, "l={ell} H={hv}: oracle {oracle} brute {brute} rel {rel:e}");
    }
}

/// `phi_v(x)` and `phi_v'(x)`.
fn gauss(ell: usize, v: f64, x: f64) -> f64 {
    let p = (-x * x / (2.0 * v)).exp() / (2.0 * PI * v).sqrt();
    match ell {
        0 => p,
        1 => -x / v * p,
        _ => unreachable!(),
    }
}

#[test]
fn first_moment_against_brute_force() {
    let opts = OracleOptions::default();
    for (ell, hv, eps, lambda) in [(0, 0.3, 0.01, 0.5), (1, 0.2, 0.02, 0.3), (1, 0.7, 0.05, -0.4), (0, 0.5, 0.001, 0.0)] {
        let h = Hurst::new(hv).unwrap();
        let q = MomentQuery::new(ell, h, 1.0, eps).unwrap().with_lambda(lambda);
        let oracle = dlt_first_moment(&q, &opts).unwrap().value;
        // substitute s = u^4 so the s^(2H) cusp at the origin is smooth in u
        let m = 20_000;
        let w = simpson_weights(m);
        let brute: f64 = (0..=m)
            .map(|i| {
                let u = i as f64 / m as f64;
                w[i] * 4.0 * u.powi(3) * gauss(ell, eps + u.powf(8.0 * hv), -lambda)
            })
            .sum();
        assert!(
            (oracle - brute).abs() < 1e-7 * brute.abs().max(1.0),
            "l={ell} H={hv}: oracle {oracle} brute {brute}"
        );
    }
}

#[test]
fn brute_force_grid_is_converged() {
    // the reference sums above should not depend on the grid at this accuracy
    let coarse = brute_second_moment(0, 0.5, 0.2, 0.2, 400);
    let fine = brute_second_moment(0, 0.5, 0.2, 0.2, 1600);
    assert!((coarse - fine).abs() / fine < 1e-5);
}
