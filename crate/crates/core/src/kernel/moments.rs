use serde::{Deserialize, Serialize};

use super::catalogue::{DecayClass, Kernel, Support};
use crate::error::{Error, Result};
use crate::quad::{grading_exponent, integrate, integrate_graded_left, QuadOptions, QuadResult};

/// `|mu[g]|` at or below this declares the kernel zero-energy.
pub const ZERO_ENERGY_TOL: f64 = 1e-9;
pub const DEFAULT_KAPPAS: [f64; 3] = [0.1, 0.25, 0.49];

const COMPACT_TOL: f64 = 1e-10;
const LINE_TOL: f64 = 1e-9;
/// Cutoff, in units of the kernel scale, for Gaussian-decay kernels.
const GAUSSIAN_CUTOFF: f64 = 14.0;
/// Start of the mapped tail, in units of the kernel scale, for polynomial decay.
const POLY_SPLIT: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedNorm {
    pub kappa: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivNorm {
    pub ell: usize,
    pub value: f64,
}

/// Integrals of a kernel that appear in the limit theorems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMoments {
    pub kernel: String,
    /// `int g`.
    pub mu: f64,
    /// `int x g(x) dx`.
    pub mu_tilde: f64,
    /// `int (1 + |x|)^kappa |g(x)| dx`, ascending in `kappa`.
    pub weighted_l1: Vec<WeightedNorm>,
    /// `||g^(l)||_2`.
    pub l2_of_deriv: Vec<DerivNorm>,
    pub zero_energy: bool,
    /// Largest quadrature error estimate among the integrals above.
    pub achieved_tolerance: f64,
}

/// `int h(x) dx` over the effective support of `k`.
///
/// `decay` is the power `d` with `|h(x)| = O(|x|^-d)`; it is only consulted
/// for polynomially decaying kernels, where `d <= 1` is an integrability
/// error. Gaussian-decay kernels are cut off at 14 scale units; polynomial
/// tails are mapped onto `(0, 1]` by `x = X / u`.
pub fn integrate_against<F>(k: &Kernel, h: F, decay: f64) -> Result<QuadResult>
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    let mut pieces: Vec<QuadResult> = Vec::new();
    match (k.support(), k.decay_class()) {
        (Support::Compact { lo, hi }, _) => {
            if lo >= hi {
                return Ok(QuadResult {
                    value: 0.0,
                    error: 0.0,
                    intervals: 0,
                    evaluations: 0,
                });
            }
            let opts = QuadOptions::with_tol(COMPACT_TOL / 2.0, 0.0).initial_intervals(4);
            if lo < 0.0 && hi > 0.0 {
                pieces.push(integrate(&h, lo, 0.0, &opts)?);
                pieces.push(integrate(&h, 0.0, hi, &opts)?);
            } else {
                pieces.push(integrate(&h, lo, hi, &opts)?);
            }
        }
        (Support::WholeLine, DecayClass::Polynomial(_)) => {
            if decay <= 1.0 {
                return Err(Error::Integrability(format!(
                    "integrand decays like |x|^-{decay} against {}, not integrable",
                    k.name()
                )));
            }
            let x0 = POLY_SPLIT * k.scale();
            let opts = QuadOptions::with_tol(LINE_TOL / 4.0, 0.0).initial_intervals(8);
            pieces.push(integrate(&h, -x0, 0.0, &opts)?);
            pieces.push(integrate(&h, 0.0, x0, &opts)?);
            // u^(decay - 2) near u = 0
            let q = grading_exponent(2.0 - decay, 12.0);
            for sign in [-1.0, 1.0] {
                let tail = |u: f64| {
                    let x = x0 / u;
                    h(sign * x) * x0 / (u * u)
                };
                pieces.push(integrate_graded_left(tail, 0.0, 1.0, q, &opts)?);
            }
        }
        (Support::WholeLine, _) => {
            let cut = GAUSSIAN_CUTOFF * k.scale();
            let opts = QuadOptions::with_tol(LINE_TOL / 2.0, 0.0).initial_intervals(8);
            pieces.push(integrate(&h, -cut, 0.0, &opts)?);
            pieces.push(integrate(&h, 0.0, cut, &opts)?);
        }
    }
    Ok(QuadResult {
        value: pieces.iter().map(|p| p.value).sum(),
        error: pieces.iter().map(|p| p.error).sum(),
        intervals: pieces.iter().map(|p| p.intervals).sum(),
        evaluations: pieces.iter().map(|p| p.evaluations).sum(),
    })
}

fn poly_decay(k: &Kernel) -> f64 {
    match k.decay_class() {
        DecayClass::Polynomial(p) => p,
        _ => f64::INFINITY,
    }
}

/// Moments and norms of `k`; `ells` must not exceed its derivative order.
pub fn compute_moments(k: &Kernel, kappas: &[f64], ells: &[usize]) -> Result<KernelMoments> {
    for &l in ells {
        k.check_order(l)?;
    }
    if let Some(&bad) = kappas.iter().find(|&&c| !(c >= 0.0 && c.is_finite())) {
        return Err(Error::domain(format!("weight exponent kappa must be nonnegative, got {bad}")));
    }
    let p = poly_decay(k);
    let mut worst: f64 = 0.0;
    let mut run = |h: &(dyn Fn(f64) -> f64 + Sync), decay: f64| -> Result<f64> {
        let r = integrate_against(k, h, decay)?;
        worst = worst.max(r.error);
        Ok(r.value)
    };
    let mu = run(&|x| k.eval(x), p)?;
    let mu_tilde = run(&|x| x * k.eval(x), p - 1.0)?;
    let mut sorted: Vec<f64> = kappas.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite kappa"));
    sorted.dedup();
    let mut weighted_l1 = Vec::with_capacity(sorted.len());
    for kappa in sorted {
        let value = run(&|x| (1.0 + x.abs()).powf(kappa) * k.eval(x).abs(), p - kappa)?;
        weighted_l1.push(WeightedNorm { kappa, value });
    }
    let mut l2_of_deriv = Vec::with_capacity(ells.len());
    for &ell in ells {
        let sq = run(&|x| k.deriv_unchecked(ell, x).powi(2), 2.0 * (p + ell as f64))?;
        l2_of_deriv.push(DerivNorm {
            ell,
            value: sq.max(0.0).sqrt(),
        });
    }
    Ok(KernelMoments {
        kernel: k.name(),
        mu,
        mu_tilde,
        weighted_l1,
        l2_of_deriv,
        zero_energy: mu.abs() <= ZERO_ENERGY_TOL,
        achieved_tolerance: worst,
    })
}
