//! Numerical quadrature: batch-adaptive Gauss–Kronrod on finite intervals,
//! power-graded substitutions for endpoint singularities, and Gauss–Hermite
//! rules for Gaussian expectations.

// the QUADPACK constants are kept digit for digit
#![allow(clippy::excessive_precision)]

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{map_indexed, pairwise_sum, Exec};

// Kronrod nodes (positive half, descending) and weights, with the embedded
// 7-point Gauss weights, from QUADPACK's qk15.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Tolerances and budget for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
    pub initial_intervals: usize,
    pub exec: Exec,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_intervals: 4000,
            initial_intervals: 1,
            exec: Exec::Sequential,
        }
    }
}

impl QuadOptions {
    pub fn with_tol(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }

    pub fn exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn max_intervals(mut self, n: usize) -> Self {
        self.max_intervals = n;
        self
    }

    pub fn initial_intervals(mut self, n: usize) -> Self {
        self.initial_intervals = n.max(1);
        self
    }
}

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kron += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let value = kron * half;
    let error = ((kron - gauss) * half).abs();
    Panel { a, b, value, error }
}

/// Adaptive Gauss–Kronrod (7/15) integration of `f` over `[a, b]`.
///
/// Refinement is done in rounds: every panel whose error exceeds its share
/// of the tolerance is bisected and the new panels are evaluated as one
/// batch (in parallel when `opts.exec` allows). Summation is in panel order,
/// so sequential and parallel runs agree bitwise.
pub fn integrate<F>(f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<QuadResult>
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::domain(format!("integration bounds must be finite, got [{a}, {b}]")));
    }
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            intervals: 0,
            evaluations: 0,
        });
    }
    let k = opts.initial_intervals.max(1);
    let width = (b - a) / k as f64;
    let mut panels = map_indexed(opts.exec, k, |i| {
        let lo = a + width * i as f64;
        let hi = if i + 1 == k { b } else { a + width * (i + 1) as f64 };
        kronrod15(&f, lo, hi)
    });
    let mut evaluations = 15 * k;
    loop {
        let values: Vec<f64> = panels.iter().map(|p| p.value).collect();
        let errors: Vec<f64> = panels.iter().map(|p| p.error).collect();
        let value = pairwise_sum(&values);
        let error = pairwise_sum(&errors);
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::numerical(format!(
                "non-finite integrand on [{a}, {b}] (value {value}, error {error})"
            )));
        }
        let tol = opts.abs_tol.max(opts.rel_tol * value.abs());
        if error <= tol {
            return Ok(QuadResult {
                value,
                error,
                intervals: panels.len(),
                evaluations,
            });
        }
        let share = tol / panels.len() as f64;
        let split: Vec<usize> = (0..panels.len())
            .filter(|&i| {
                let p = &panels[i];
                let mid = 0.5 * (p.a + p.b);
                p.error > share && mid > p.a && mid < p.b
            })
            .collect();
        if split.is_empty() || panels.len() + split.len() > opts.max_intervals {
            return Err(Error::Accuracy {
                estimate: value,
                error_bound: error,
                detail: format!("{} panels on [{a}, {b}], tolerance {tol:e}", panels.len()),
            });
        }
        let halves: Vec<(f64, f64)> = split
            .iter()
            .flat_map(|&i| {
                let p = panels[i];
                let mid = 0.5 * (p.a + p.b);
                [(p.a, mid), (mid, p.b)]
            })
            .collect();
        let fresh = map_indexed(opts.exec, halves.len(), |j| kronrod15(&f, halves[j].0, halves[j].1));
        evaluations += 15 * fresh.len();
        let mut next = Vec::with_capacity(panels.len() + split.len());
        let mut fresh_iter = fresh.into_iter();
        let mut split_iter = split.iter().peekable();
        for (i, p) in panels.iter().enumerate() {
            if split_iter.peek() == Some(&&i) {
                split_iter.next();
                next.push(fresh_iter.next().expect("left half"));
                next.push(fresh_iter.next().expect("right half"));
            } else {
                next.push(*p);
            }
        }
        panels = next;
    }
}

/// Integrates over `[a, b]` after the substitution `x = a + (b - a) u^q`,
/// which clusters nodes toward `a`. Suited to integrands that behave like
/// `(x - a)^(-alpha)` with `q (1 - alpha) >= 1`.
///
/// `f` receives the offset `d = x - a` rather than `x`, so integrands
/// singular at `a` can be evaluated without cancellation. Nodes where `d`
/// underflows to 0 contribute 0.
pub fn integrate_graded_left<F>(f: F, a: f64, b: f64, q: f64, opts: &QuadOptions) -> Result<QuadResult>
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    graded(f, b - a, q, opts)
}

/// Mirror image of [`integrate_graded_left`]: nodes cluster toward `b` and
/// `f` receives the offset `d = b - x`.
pub fn integrate_graded_right<F>(f: F, a: f64, b: f64, q: f64, opts: &QuadOptions) -> Result<QuadResult>
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    graded(f, b - a, q, opts)
}

fn graded<F>(f: F, len: f64, q: f64, opts: &QuadOptions) -> Result<QuadResult>
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    integrate(
        move |u: f64| {
            let d = len * u.powf(q);
            if d <= 0.0 {
                return 0.0;
            }
            f(d) * len * q * u.powf(q - 1.0)
        },
        0.0,
        1.0,
        opts,
    )
}

/// Grading exponent for an endpoint singularity of power `alpha`.
///
/// Integrable singularities (`alpha < 1`) get `q = 2 / (1 - alpha)`, which
/// makes the transformed integrand vanish at the endpoint; the exponent is
/// capped at `max_q`, which also covers regularised non-integrable peaks.
pub fn grading_exponent(alpha: f64, max_q: f64) -> f64 {
    if alpha <= 0.0 {
        return 1.0;
    }
    if alpha >= 1.0 {
        return max_q;
    }
    (2.0 / (1.0 - alpha)).clamp(1.0, max_q)
}

/// Gauss–Hermite rule for expectations under the standard normal law:
/// `E[p(Z)] = sum_i weights[i] * p(nodes[i])`, exact for polynomials of
/// degree `< 2 * order`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Hermite order must be positive");
        if order == 1 {
            return Self {
                nodes: vec![0.0],
                weights: vec![1.0],
            };
        }
        // Golub-Welsch on the probabilists' Jacobi matrix, polished by Newton.
        let mut jacobi = DMatrix::<f64>::zeros(order, order);
        for k in 1..order {
            let off = (k as f64).sqrt();
            jacobi[(k, k - 1)] = off;
            jacobi[(k - 1, k)] = off;
        }
        let eig = SymmetricEigen::new(jacobi);
        let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        nodes.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
        let mut weights = Vec::with_capacity(order);
        let log_fact: f64 = (1..=order).map(|k| (k as f64).ln()).sum();
        for x in nodes.iter_mut() {
            for _ in 0..3 {
                let (p, dp) = hermite_pair(order, *x);
                let step = p / dp;
                *x -= step;
                if step.abs() < 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
            let (prev, _) = hermite_pair(order - 1, *x);
            // w = n! / (n^2 He_{n-1}(x)^2), in logs to avoid overflow.
            let log_w = log_fact - 2.0 * (order as f64).ln() - 2.0 * prev.abs().ln();
            weights.push(log_w.exp());
        }
        Self { nodes, weights }
    }

    /// `E[f(Z)]` for `Z ~ N(0, 1)`.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// `(He_n(x), He_n'(x))` by the three-term recurrence.
fn hermite_pair(n: usize, x: f64) -> (f64, f64) {
    let mut prev = 1.0;
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut cur = x;
    for k in 1..n {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    (cur, n as f64 * prev)
}
