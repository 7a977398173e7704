//! Fractional Brownian motion: covariance algebra, exact simulation on
//! uniform grids, and Gaussian conditioning identities.
//!
//! $$
//! R(s,t)=\tfrac12\left(s^{2H}+t^{2H}-|t-s|^{2H}\right)
//! $$

mod conditioning;
mod io;
mod sim;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use conditioning::{conditional_variance, det_decomposition, local_nondeterminism_ratio, DetDecomposition, GaussianConditioning};
pub use io::{read_path, read_path_binary, read_path_csv, write_path, write_path_binary, write_path_csv, PathEncoding};
pub use sim::{simulate, simulate_stream, subsample, FbmPath, Method, CHOLESKY_MAX_NODES, CIRCULANT_MAX_NODES};

/// Hurst index, strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Hurst(f64);

impl Hurst {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value < 1.0 {
            Ok(Self(value))
        } else {
            Err(Error::domain(format!("Hurst index must lie in (0, 1), got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `2H`, the self-similarity exponent of the variance.
    pub fn two_h(self) -> f64 {
        2.0 * self.0
    }

    fn is_brownian(self) -> bool {
        self.0 == 0.5
    }
}

impl TryFrom<f64> for Hurst {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Hurst::new(value)
    }
}

impl From<Hurst> for f64 {
    fn from(h: Hurst) -> f64 {
        h.0
    }
}

/// Uniform grid `t_i = i / n`, `i = 0..=floor(n T)`.
///
/// Times are addressed by integer index; [`TimeGrid::time`] converts an
/// index to a real only at the point of use, so nested grids agree exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    n: usize,
    horizon: f64,
}

impl TimeGrid {
    pub fn new(n: usize, horizon: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("grid resolution n must be positive"));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::domain(format!("grid horizon must be positive and finite, got {horizon}")));
        }
        Ok(Self { n, horizon })
    }

    /// Unit-horizon grid with `n` steps.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(n, 1.0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Step `1 / n`.
    pub fn step(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Index of the last node, `floor(n T)`.
    pub fn last_index(&self) -> usize {
        floor_product(self.n, self.horizon)
    }

    pub fn node_count(&self) -> usize {
        self.last_index() + 1
    }

    pub fn time(&self, index: usize) -> f64 {
        index as f64 / self.n as f64
    }

    /// `floor(n t)`, tolerant to `t` given as a rounded decimal.
    pub fn floor_index(&self, t: f64) -> usize {
        floor_product(self.n, t)
    }
}

/// `floor(n t)` where products within a few ulps of an integer snap to it.
pub(crate) fn floor_product(n: usize, t: f64) -> usize {
    let x = n as f64 * t;
    let r = x.round();
    if (x - r).abs() <= 4.0 * f64::EPSILON * r.abs().max(1.0) {
        r.max(0.0) as usize
    } else {
        x.floor().max(0.0) as usize
    }
}

/// Covariance `R(s, t) = E[X_s X_t]`.
pub fn cov(s: f64, t: f64, h: Hurst) -> Result<f64> {
    if s < 0.0 || t < 0.0 || s.is_nan() || t.is_nan() {
        return Err(Error::domain(format!("covariance needs nonnegative times, got ({s}, {t})")));
    }
    Ok(cov_unchecked(s, t, h))
}

pub(crate) fn cov_unchecked(s: f64, t: f64, h: Hurst) -> f64 {
    if h.is_brownian() {
        return s.min(t);
    }
    let e = h.two_h();
    0.5 * (s.powf(e) + t.powf(e) - (t - s).abs().powf(e))
}

/// `E[(X_{u+h} - X_u)(X_{v+k} - X_v)]`, the inner product of the indicators
/// of `[u, u+h]` and `[v, v+k]` in the reproducing space of the process.
pub fn increment_inner_product(u: f64, h: f64, v: f64, k: f64, hurst: Hurst) -> Result<f64> {
    if !(h > 0.0 && k > 0.0) {
        return Err(Error::domain(format!("increment widths must be positive, got h={h}, k={k}")));
    }
    if u < 0.0 || v < 0.0 || u.is_nan() || v.is_nan() {
        return Err(Error::domain(format!("increment starts must be nonnegative, got u={u}, v={v}")));
    }
    Ok(cov_unchecked(u + h, v + k, hurst) - cov_unchecked(u + h, v, hurst) - cov_unchecked(u, v + k, hurst) + cov_unchecked(u, v, hurst))
}

/// Covariance matrix of `(X_{t_1}, ..., X_{t_r})`.
pub(crate) fn cov_matrix(times: &[f64], h: Hurst) -> nalgebra::DMatrix<f64> {
    let m = times.len();
    nalgebra::DMatrix::from_fn(m, m, |i, j| cov_unchecked(times[i], times[j], h))
}
