//! Estimators of the local time of a sampled path and of its spatial
//! derivatives `L_t^(l)(lambda)`: the high-frequency statistic `G`, the
//! mollified occupation integral and a truncated Fourier integral.
//!
//! Sign convention: `d/dlambda L^(l-1)(lambda) = -L^(l)(lambda)`, which is
//! what both the mollifier and the Fourier definitions give.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::{floor_product, FbmPath};
use crate::kernel::{mollifier_deriv_raw, Kernel};
use crate::par::{map_indexed, map_slice, pairwise_sum, Exec};

/// Tolerance on the imaginary part left over by the Fourier route, relative
/// to the total absolute mass of the integrand.
pub const FOURIER_IMAG_TOL: f64 = 1e-8;
/// Number of `xi` steps across the cutoff in the default Fourier rule.
pub const FOURIER_DEFAULT_STEPS: f64 = 2048.0;

/// Borrowed grid values `x_i = X_{i/n}`.
///
/// Unlike [`FbmPath`] a view may start anywhere, which is what shifted and
/// synthetic test paths need.
#[derive(Debug, Clone, Copy)]
pub struct PathView<'a> {
    values: &'a [f64],
    n: usize,
}

impl<'a> PathView<'a> {
    pub fn new(values: &'a [f64], n: usize) -> Result<Self> {
        if values.is_empty() || n == 0 {
            return Err(Error::domain("a path view needs at least one value and n > 0"));
        }
        Ok(Self { values, n })
    }

    pub fn values(&self) -> &'a [f64] {
        self.values
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        (self.values.len() - 1) as f64 / self.n as f64
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0) || floor_product(self.n, t) > self.values.len() - 1 || t > self.horizon() * (1.0 + 1e-12) {
            return Err(Error::domain(format!("time {t} lies outside the path horizon {}", self.horizon())));
        }
        Ok(())
    }

    /// Linear interpolation between grid values.
    fn at(&self, t: f64) -> f64 {
        let i = floor_product(self.n, t).min(self.values.len() - 1);
        let frac = t * self.n as f64 - i as f64;
        if i + 1 >= self.values.len() || frac <= 0.0 {
            return self.values[i];
        }
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }

    /// Trapezoid nodes `(x, weight)` for `int_t0^t1 h(X_s) ds`. Partial end
    /// cells use the linearly interpolated path value.
    fn trapezoid(&self, t0: f64, t1: f64) -> Vec<(f64, f64)> {
        let dt = 1.0 / self.n as f64;
        let last = self.values.len() - 1;
        let first_full = if on_grid(self.n, t0) {
            (t0 * self.n as f64).round() as usize
        } else {
            floor_product(self.n, t0) + 1
        };
        let last_full = floor_product(self.n, t1).min(last);
        if t1 <= t0 {
            return Vec::new();
        }
        if first_full > last_full {
            let w = 0.5 * (t1 - t0);
            return vec![(self.at(t0), w), (self.at(t1), w)];
        }
        let mut nodes = Vec::with_capacity(last_full - first_full + 3);
        let left = first_full as f64 * dt - t0;
        if left > 0.0 && !on_grid(self.n, t0) {
            nodes.push((self.at(t0), 0.5 * left));
            nodes.push((self.values[first_full], 0.5 * left));
        }
        if last_full > first_full {
            nodes.push((self.values[first_full], 0.5 * dt));
            for i in first_full + 1..last_full {
                nodes.push((self.values[i], dt));
            }
            nodes.push((self.values[last_full], 0.5 * dt));
        }
        let right = t1 - last_full as f64 * dt;
        if right > 0.0 && !on_grid(self.n, t1) {
            nodes.push((self.values[last_full], 0.5 * right));
            nodes.push((self.at(t1), 0.5 * right));
        }
        nodes
    }
}

fn on_grid(n: usize, t: f64) -> bool {
    let x = n as f64 * t;
    (x - x.round()).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0)
}

impl<'a> From<&'a FbmPath> for PathView<'a> {
    fn from(p: &'a FbmPath) -> Self {
        PathView {
            values: p.values(),
            n: p.grid().n(),
        }
    }
}

/// Parameters of `G_{t,lambda,a}^{(n,l)}[g]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatisticSpec {
    pub ell: usize,
    pub a: f64,
    pub lambda: f64,
    pub t: f64,
}

impl StatisticSpec {
    pub fn new(ell: usize, a: f64, lambda: f64, t: f64) -> Result<Self> {
        if !(a.is_finite() && lambda.is_finite() && t.is_finite() && t >= 0.0) {
            return Err(Error::domain(format!("invalid statistic parameters a={a}, lambda={lambda}, t={t}")));
        }
        Ok(Self { ell, a, lambda, t })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Discrete,
    Mollified,
    Fourier,
}

/// How an estimate was produced; together with the path this replays it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "route", rename_all = "lowercase")]
pub enum EstimateParams {
    Discrete {
        n: usize,
        a: f64,
        kernel: String,
        normalized: bool,
    },
    Mollified {
        n: usize,
        epsilon: f64,
        t0: f64,
    },
    Fourier {
        n: usize,
        xi_cutoff: f64,
        xi_step: f64,
        damping: Option<f64>,
        imag_residue: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DltEstimate {
    pub value: f64,
    pub ell: usize,
    pub lambda: f64,
    pub t: f64,
    #[serde(flatten)]
    pub params: EstimateParams,
}

impl DltEstimate {
    pub fn route(&self) -> Route {
        match self.params {
            EstimateParams::Discrete { .. } => Route::Discrete,
            EstimateParams::Mollified { .. } => Route::Mollified,
            EstimateParams::Fourier { .. } => Route::Fourier,
        }
    }
}

/// `sum_{i=2}^{floor(nt)} g^(l)(n^a (x_{i-1} - lambda))`, times
/// `n^{a(l+1)-1}` when `normalized`. Zero when `nt < 2`.
pub fn g_statistic_value(view: PathView<'_>, kernel: &Kernel, spec: &StatisticSpec, normalized: bool) -> Result<f64> {
    kernel.check_order(spec.ell)?;
    view.check_time(spec.t)?;
    let n = view.n as f64;
    let last = floor_product(view.n, spec.t);
    let scale = n.powf(spec.a);
    let mut sum = 0.0;
    for i in 2..=last {
        sum += kernel.deriv_unchecked(spec.ell, scale * (view.values[i - 1] - spec.lambda));
    }
    if normalized {
        sum *= n.powf(spec.a * (spec.ell as f64 + 1.0) - 1.0);
    }
    Ok(sum)
}

pub fn g_statistic<'a>(path: impl Into<PathView<'a>>, kernel: &Kernel, spec: &StatisticSpec, normalized: bool) -> Result<DltEstimate> {
    let view = path.into();
    let value = g_statistic_value(view, kernel, spec, normalized)?;
    Ok(DltEstimate {
        value,
        ell: spec.ell,
        lambda: spec.lambda,
        t: spec.t,
        params: EstimateParams::Discrete {
            n: view.n,
            a: spec.a,
            kernel: kernel.name(),
            normalized,
        },
    })
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("mollifier variance must be positive, got {epsilon}")))
    }
}

/// `int_t0^t1 phi_eps^(l)(X_s - lambda) ds` by the trapezoid rule on the
/// path's own grid.
pub fn mollified_dlt_between<'a>(
    path: impl Into<PathView<'a>>,
    ell: usize,
    lambda: f64,
    epsilon: f64,
    t0: f64,
    t1: f64,
) -> Result<DltEstimate> {
    let view = path.into();
    check_epsilon(epsilon)?;
    view.check_time(t0)?;
    view.check_time(t1)?;
    if t0 > t1 {
        return Err(Error::domain(format!("time interval [{t0}, {t1}] is reversed")));
    }
    let value = view
        .trapezoid(t0, t1)
        .iter()
        .map(|&(x, w)| w * mollifier_deriv_raw(ell, epsilon, x - lambda))
        .sum();
    Ok(DltEstimate {
        value,
        ell,
        lambda,
        t: t1,
        params: EstimateParams::Mollified { n: view.n, epsilon, t0 },
    })
}

/// `L_{t,eps}^(l)(lambda) = int_0^t phi_eps^(l)(X_s - lambda) ds`.
pub fn mollified_dlt<'a>(path: impl Into<PathView<'a>>, spec: &StatisticSpec, epsilon: f64) -> Result<DltEstimate> {
    mollified_dlt_between(path, spec.ell, spec.lambda, epsilon, 0.0, spec.t)
}

/// `xi` quadrature for [`fourier_dlt`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierOptions {
    pub xi_cutoff: f64,
    pub xi_step: f64,
    /// Inserts `exp(-damping xi^2 / 2)`; with `damping = eps` the route
    /// reproduces [`mollified_dlt`] at `eps`.
    pub damping: Option<f64>,
}

impl FourierOptions {
    pub fn new(xi_cutoff: f64, xi_step: f64) -> Result<Self> {
        if !(xi_cutoff > 0.0 && xi_step > 0.0 && xi_cutoff.is_finite()) {
            return Err(Error::domain(format!(
                "Fourier cutoff and step must be positive, got N={xi_cutoff}, step={xi_step}"
            )));
        }
        Ok(Self {
            xi_cutoff,
            xi_step,
            damping: None,
        })
    }

    /// Cutoff `12 / sqrt(eps)`, step `cutoff / 2048`.
    pub fn for_epsilon(eps: f64) -> Result<Self> {
        check_epsilon(eps)?;
        let cutoff = 12.0 / eps.sqrt();
        Self::new(cutoff, cutoff / FOURIER_DEFAULT_STEPS)
    }

    pub fn damped(mut self, eps: f64) -> Result<Self> {
        check_epsilon(eps)?;
        self.damping = Some(eps);
        Ok(self)
    }
}

/// `(1/2pi) int_{-N}^{N} (i xi)^l e^{-damping xi^2/2} int_0^t e^{i xi (X_s - lambda)} ds dxi`,
/// trapezoid in both variables on a `xi` grid symmetric about 0.
pub fn fourier_dlt<'a>(path: impl Into<PathView<'a>>, spec: &StatisticSpec, opts: &FourierOptions, exec: Exec) -> Result<DltEstimate> {
    let view = path.into();
    view.check_time(spec.t)?;
    FourierOptions::new(opts.xi_cutoff, opts.xi_step)?;
    let half = (opts.xi_cutoff / opts.xi_step).round().max(1.0) as usize;
    let step = opts.xi_cutoff / half as f64;
    let nodes = view.trapezoid(0.0, spec.t);
    let terms = map_indexed(exec, 2 * half + 1, |j| {
        let k = j as i64 - half as i64;
        let xi = k as f64 * step;
        let (mut re, mut im) = (0.0, 0.0);
        for &(x, w) in &nodes {
            let (s, c) = (xi * (x - spec.lambda)).sin_cos();
            re += w * c;
            im += w * s;
        }
        let damp = opts.damping.map_or(1.0, |d| (-0.5 * d * xi * xi).exp());
        let edge = if k.unsigned_abs() as usize == half { 0.5 } else { 1.0 };
        let weight = edge * step * damp * xi.powi(spec.ell as i32);
        // multiply by i^l
        let (pr, pi) = match spec.ell % 4 {
            0 => (re, im),
            1 => (-im, re),
            2 => (-re, -im),
            _ => (im, -re),
        };
        (weight * pr, weight * pi)
    });
    let re: Vec<f64> = terms.iter().map(|t| t.0).collect();
    let im: Vec<f64> = terms.iter().map(|t| t.1).collect();
    let mass: Vec<f64> = terms.iter().map(|t| t.0.abs() + t.1.abs()).collect();
    let value = pairwise_sum(&re) / (2.0 * PI);
    let residue = pairwise_sum(&im).abs() / (2.0 * PI);
    let total = pairwise_sum(&mass) / (2.0 * PI);
    if residue > FOURIER_IMAG_TOL * total.max(f64::MIN_POSITIVE) {
        return Err(Error::numerical(format!(
            "Fourier route left an imaginary part {residue:e} against mass {total:e}"
        )));
    }
    Ok(DltEstimate {
        value,
        ell: spec.ell,
        lambda: spec.lambda,
        t: spec.t,
        params: EstimateParams::Fourier {
            n: view.n,
            xi_cutoff: opts.xi_cutoff,
            xi_step: step,
            damping: opts.damping,
            imag_residue: residue,
        },
    })
}

/// `int_0^t 1_[lo, hi](X_s) ds` by node counting with trapezoid weights.
pub fn occupation_time<'a>(path: impl Into<PathView<'a>>, lo: f64, hi: f64, t: f64) -> Result<f64> {
    let view = path.into();
    if !(lo < hi) {
        return Err(Error::domain(format!("occupation interval needs lo < hi, got [{lo}, {hi}]")));
    }
    view.check_time(t)?;
    Ok(view
        .trapezoid(0.0, t)
        .iter()
        .filter(|(x, _)| *x >= lo && *x <= hi)
        .map(|(_, w)| w)
        .sum())
}

/// [`mollified_dlt`] on every level of `lambdas`, sharing one pass over the
/// path's trapezoid nodes.
pub fn dlt_profile<'a>(
    path: impl Into<PathView<'a>>,
    ell: usize,
    epsilon: f64,
    lambdas: &[f64],
    t: f64,
    exec: Exec,
) -> Result<Vec<DltEstimate>> {
    let view = path.into();
    check_epsilon(epsilon)?;
    view.check_time(t)?;
    let nodes = view.trapezoid(0.0, t);
    Ok(map_slice(exec, lambdas, |&lambda| DltEstimate {
        value: nodes.iter().map(|&(x, w)| w * mollifier_deriv_raw(ell, epsilon, x - lambda)).sum(),
        ell,
        lambda,
        t,
        params: EstimateParams::Mollified {
            n: view.n,
            epsilon,
            t0: 0.0,
        },
    }))
}
