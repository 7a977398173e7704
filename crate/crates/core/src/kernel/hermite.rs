//! Probabilists' Hermite polynomials and Gaussian mollifier derivatives.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `He_q` with exact integer coefficients, lowest degree first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HermitePoly {
    order: usize,
    coefficients: Vec<i128>,
}

impl HermitePoly {
    /// Builds `He_q` from `He_{q+1} = x He_q - q He_{q-1}`.
    ///
    /// Coefficients fit in `i128` up to order 40.
    pub fn new(order: usize) -> Self {
        assert!(order <= 40, "integer Hermite coefficients overflow beyond order 40");
        let mut prev: Vec<i128> = vec![1];
        if order == 0 {
            return Self { order, coefficients: prev };
        }
        let mut cur: Vec<i128> = vec![0, 1];
        for q in 1..order {
            let mut next = vec![0i128; q + 2];
            for (i, &c) in cur.iter().enumerate() {
                next[i + 1] += c;
            }
            for (i, &c) in prev.iter().enumerate() {
                next[i] -= q as i128 * c;
            }
            prev = cur;
            cur = next;
        }
        Self { order, coefficients: cur }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coefficients(&self) -> &[i128] {
        &self.coefficients
    }

    /// Horner evaluation of the stored coefficients.
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c as f64)
    }
}

/// `He_q(x)` by the three-term recurrence.
pub fn hermite_eval(q: usize, x: f64) -> f64 {
    if q == 0 {
        return 1.0;
    }
    let mut prev = 1.0;
    let mut cur = x;
    for k in 1..q {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `|x| / sqrt(eps)` beyond which mollifier derivatives are returned as 0.
pub const MOLLIFIER_CUTOFF: f64 = 40.0;

/// Width and derivative order of a Gaussian mollifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifierSpec {
    pub epsilon: f64,
    pub order: usize,
}

impl MollifierSpec {
    pub fn new(epsilon: f64, order: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::domain(format!("mollifier variance must be positive, got {epsilon}")));
        }
        Ok(Self { epsilon, order })
    }
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `d^l/dx^l` of the centred Gaussian density with variance `eps`:
/// `eps^{-(l+1)/2} (-1)^l He_l(x / sqrt(eps)) phi(x / sqrt(eps))`.
pub fn mollifier_deriv(spec: MollifierSpec, x: f64) -> f64 {
    mollifier_deriv_raw(spec.order, spec.epsilon, x)
}

#[inline]
pub(crate) fn mollifier_deriv_raw(order: usize, eps: f64, x: f64) -> f64 {
    let sd = eps.sqrt();
    let z = x / sd;
    if z.abs() > MOLLIFIER_CUTOFF {
        return 0.0;
    }
    let sign = if order.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * hermite_eval(order, z) * std_normal_pdf(z) / sd.powi(order as i32 + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::GaussHermite;

    #[test]
    fn base_cases() {
        for x in [-2.0, 0.0, 0.3, 5.0] {
            assert_eq!(hermite_eval(0, x), 1.0);
            assert_eq!(hermite_eval(1, x), x);
        }
        assert_eq!(hermite_eval(2, 2.0), 3.0);
        assert_eq!(HermitePoly::new(2).coefficients(), &[-1, 0, 1]);
        assert_eq!(HermitePoly::new(5).coefficients(), &[0, 15, 0, -10, 0, 1]);
    }

    #[test]
    fn coefficients_match_recurrence() {
        for q in 0..12 {
            let p = HermitePoly::new(q);
            assert_eq!(*p.coefficients().last().unwrap(), 1);
            for x in [-3i32, -1, 0, 2, 4] {
                // integer points: both routes are exact in f64 at this size
                assert_eq!(p.eval(x as f64), hermite_eval(q, x as f64), "q={q} x={x}");
            }
        }
    }

    /// Lyness–Moler contour differences: the q-th derivative of an analytic
    /// function from samples on a circle, trapezoid rule in the angle.
    fn contour_derivative(f: impl Fn(rustfft::num_complex::Complex64) -> rustfft::num_complex::Complex64, x: f64, q: usize) -> f64 {
        use rustfft::num_complex::Complex64;
        let points = 64;
        let radius = 1.0;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..points {
            let theta = 2.0 * PI * k as f64 / points as f64;
            let w = Complex64::from_polar(radius, theta);
            acc += f(Complex64::new(x, 0.0) + w) * Complex64::from_polar(1.0, -(q as f64) * theta);
        }
        let fact: f64 = (1..=q).map(|k| k as f64).product();
        (acc / points as f64).re * fact / radius.powi(q as i32)
    }

    #[test]
    fn recurrence_matches_rodrigues() {
        // He_q(x) = (-1)^q e^{x^2/2} d^q/dx^q e^{-x^2/2}
        let gauss = |z: rustfft::num_complex::Complex64| (-0.5 * z * z).exp();
        for q in 0..=5 {
            for x in [-1.7, 0.0, 0.4, 1.3, 2.2] {
                let d = contour_derivative(gauss, x, q);
                let rodrigues = if q % 2 == 0 { 1.0 } else { -1.0 } * (0.5 * x * x).exp() * d;
                assert!((rodrigues - hermite_eval(q, x)).abs() < 1e-8, "q={q} x={x}: {rodrigues}");
            }
        }
        assert!((hermite_eval(5, 1.3) - (1.3f64.powi(5) - 10.0 * 1.3f64.powi(3) + 15.0 * 1.3)).abs() < 1e-12);
    }

    #[test]
    fn mollifier_examples() {
        let s = |eps, order| MollifierSpec::new(eps, order).unwrap();
        assert_eq!(mollifier_deriv(s(0.3, 1), 0.0), 0.0);
        assert!((mollifier_deriv(s(1.0, 0), 0.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!((mollifier_deriv(s(1.0, 2), 0.0) + 0.398_942_280_401_432_7).abs() < 1e-15);
        assert_eq!(mollifier_deriv(s(1e-4, 3), 1.0), 0.0);
        assert!(MollifierSpec::new(0.0, 1).is_err());
    }

    #[test]
    fn mollifier_derivative_is_finite_difference_of_lower_order() {
        for eps in [0.05f64, 1.0, 3.0] {
            let sd: f64 = eps.sqrt();
            for order in 1..=4 {
                let h = 1e-4 * sd;
                for k in -20..=20 {
                    let x = 5.0 * sd * k as f64 / 20.0;
                    let lower = |y| mollifier_deriv_raw(order - 1, eps, y);
                    let fd = (lower(x + h) - lower(x - h)) / (2.0 * h);
                    let exact = mollifier_deriv_raw(order, eps, x);
                    let scale = mollifier_deriv_raw(0, eps, 0.0) / sd.powi(order as i32);
                    assert!(
                        (fd - exact).abs() <= 1e-6 * scale.max(1.0),
                        "eps={eps} l={order} x={x}: {fd} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn hermite_orthogonality_under_correlation() {
        // Y2 = rho Y1 + sqrt(1 - rho^2) Z, integrated with a 2-D product rule
        let gh = GaussHermite::new(20);
        for rho in [-0.5f64, 0.0, 0.7] {
            let tail = (1.0 - rho * rho).sqrt();
            for q in 0..=4 {
                for qt in 0..=4 {
                    let mut acc = 0.0;
                    for (&y, &wy) in gh.nodes.iter().zip(&gh.weights) {
                        for (&z, &wz) in gh.nodes.iter().zip(&gh.weights) {
                            acc += wy * wz * hermite_eval(q, y) * hermite_eval(qt, rho * y + tail * z);
                        }
                    }
                    let fact: f64 = (1..=q).map(|k| k as f64).product();
                    let expected = if q == qt { fact * rho.powi(q as i32) } else { 0.0 };
                    assert!((acc - expected).abs() < 1e-6, "rho={rho} q={q} q~={qt}: {acc}");
                }
            }
        }
    }
}
