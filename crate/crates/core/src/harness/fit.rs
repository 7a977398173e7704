use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `log(error) = intercept + slope * log(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr_slope: f64,
    pub r_squared: f64,
}

/// Weighted least squares of `log(errors)` on `log(n_values)` with weights
/// `1 / (stderr / error)^2`. When any standard error is zero the fit is
/// unweighted.
pub fn fit_rate(n_values: &[usize], errors: &[f64], stderrs: &[f64]) -> Result<RateFit> {
    let x: Vec<f64> = n_values.iter().map(|&n| n as f64).collect();
    fit_power_law(&x, errors, stderrs)
}

/// [`fit_rate`] for real abscissae.
pub fn fit_power_law(x: &[f64], y: &[f64], stderrs: &[f64]) -> Result<RateFit> {
    let m = x.len();
    if m < 3 || y.len() != m || stderrs.len() != m {
        return Err(Error::domain(format!(
            "rate fit needs at least 3 points of equal length, got {} / {} / {}",
            m,
            y.len(),
            stderrs.len()
        )));
    }
    if let Some(bad) = y.iter().find(|&&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::domain(format!("rate fit needs positive errors, got {bad}")));
    }
    if let Some(bad) = x.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::domain(format!("rate fit needs positive abscissae, got {bad}")));
    }
    if stderrs.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::domain("standard errors must be nonnegative"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let w: Vec<f64> = if stderrs.contains(&0.0) {
        vec![1.0; m]
    } else {
        stderrs.iter().zip(y).map(|(s, e)| (e / s).powi(2)).collect()
    };
    let sw: f64 = w.iter().sum();
    let mx = w.iter().zip(&lx).map(|(w, x)| w * x).sum::<f64>() / sw;
    let my = w.iter().zip(&ly).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(&lx).map(|(w, x)| w * (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::domain("rate fit needs at least two distinct abscissae"));
    }
    let sxy: f64 = (0..m).map(|i| w[i] * (lx[i] - mx) * (ly[i] - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = (0..m).map(|i| w[i] * (ly[i] - intercept - slope * lx[i]).powi(2)).sum();
    let ss_tot: f64 = (0..m).map(|i| w[i] * (ly[i] - my).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let stderr_slope = (ss_res / (m as f64 - 2.0) / sxx).sqrt();
    Ok(RateFit {
        slope,
        intercept,
        stderr_slope,
        r_squared,
    })
}
