use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{cov_matrix, cov_unchecked, Hurst};
use crate::error::{Error, Result};

const CONDITIONING_JITTER: f64 = 1e-12;
const CLAMP_TOL: f64 = 1e-10;

/// A query `Var[X_t | X_{t_1}, ..., X_{t_k}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianConditioning {
    pub target_time: f64,
    pub conditioner_times: Vec<f64>,
    pub hurst: Hurst,
}

impl GaussianConditioning {
    pub fn new(target_time: f64, conditioner_times: Vec<f64>, hurst: Hurst) -> Result<Self> {
        let c = Self {
            target_time,
            conditioner_times,
            hurst,
        };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        if !(self.target_time > 0.0) {
            return Err(Error::domain(format!("target time must be positive, got {}", self.target_time)));
        }
        check_distinct_positive(&self.conditioner_times)
    }
}

fn check_distinct_positive(times: &[f64]) -> Result<()> {
    for (i, &t) in times.iter().enumerate() {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::domain(format!("conditioning times must be positive, got {t}")));
        }
        if times[..i].contains(&t) {
            return Err(Error::domain(format!("duplicate time {t}")));
        }
    }
    Ok(())
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `sigma x = r` by Cholesky, retrying once with diagonal jitter.
fn spd_solve(sigma: DMatrix<f64>, r: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = sigma.clone().cholesky() {
        return Ok(ch.solve(r));
    }
    let mut jittered = sigma.clone();
    for i in 0..jittered.nrows() {
        jittered[(i, i)] += CONDITIONING_JITTER;
    }
    match jittered.cholesky() {
        Some(ch) => Ok(ch.solve(r)),
        None => Err(Error::numerical(format!(
            "conditioning covariance of size {} is singular (condition number {:e}) even with diagonal jitter {CONDITIONING_JITTER:e}",
            sigma.nrows(),
            condition_number(&sigma)
        ))),
    }
}

/// Conditional variance by Gaussian regression: `Var[X_t] - r' Sigma^{-1} r`.
pub fn conditional_variance(c: &GaussianConditioning) -> Result<f64> {
    c.validate()?;
    let h = c.hurst;
    let t = c.target_time;
    let var = cov_unchecked(t, t, h);
    if c.conditioner_times.is_empty() {
        return Ok(var);
    }
    let sigma = cov_matrix(&c.conditioner_times, h);
    let r = DVector::from_iterator(
        c.conditioner_times.len(),
        c.conditioner_times.iter().map(|&s| cov_unchecked(s, t, h)),
    );
    let coef = spd_solve(sigma, &r)?;
    let out = var - r.dot(&coef);
    if out >= 0.0 {
        Ok(out)
    } else if out >= -CLAMP_TOL {
        Ok(0.0)
    } else {
        Err(Error::numerical(format!("conditional variance came out negative ({out:e})")))
    }
}

/// `Var[X_t | ...] / min_i |t - t_i|^{2H}` with `t_0 = 0` included in the
/// minimum. Positive by local nondeterminism.
pub fn local_nondeterminism_ratio(c: &GaussianConditioning) -> Result<f64> {
    let v = conditional_variance(c)?;
    let two_h = c.hurst.two_h();
    let gap = c
        .conditioner_times
        .iter()
        .chain(std::iter::once(&0.0))
        .map(|&s| (c.target_time - s).abs())
        .fold(f64::INFINITY, f64::min);
    if gap == 0.0 {
        return Err(Error::domain("target time coincides with a conditioning time"));
    }
    Ok(v / gap.powf(two_h))
}

/// Determinant of the covariance matrix next to the telescoping product of
/// sequential conditional variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetDecomposition {
    pub det: f64,
    pub product_of_conditional_variances: f64,
}

pub fn det_decomposition(times: &[f64], h: Hurst) -> Result<DetDecomposition> {
    if times.is_empty() {
        return Err(Error::domain("determinant decomposition needs at least one time"));
    }
    check_distinct_positive(times)?;
    let det = cov_matrix(times, h).determinant();
    let mut product = 1.0;
    for j in 0..times.len() {
        let c = GaussianConditioning {
            target_time: times[j],
            conditioner_times: times[..j].to_vec(),
            hurst: h,
        };
        product *= conditional_variance(&c)?;
    }
    Ok(DetDecomposition {
        det,
        product_of_conditional_variances: product,
    })
}
