//! Simulation-free reference values: first and second moments of mollified
//! local-time derivatives, the existence-threshold probe, Gaussian pair
//! moments and an audit of the increment covariance bounds.

use std::f64::consts::PI;
use std::sync::Mutex;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::{increment_inner_product, Hurst};
use crate::kernel::mollifier_deriv_raw;
use crate::par::{map_indexed, Exec};
use crate::quad::{grading_exponent, integrate_graded_left, integrate_graded_right, GaussHermite, QuadOptions};
use crate::rng::StreamId;

/// Gauss–Hermite order per axis for [`gaussian_pair_moment`].
pub const PAIR_GH_ORDER: usize = 40;
/// Largest grading exponent used near the singular edges.
pub const MAX_GRADING: f64 = 12.0;
pub const CONVERGING_RATIO: f64 = 1.10;
pub const DIVERGING_RATIO: f64 = 1.20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentQuery {
    pub ell: usize,
    pub hurst: Hurst,
    pub t: f64,
    pub eps: f64,
    /// Second mollifier width for cross moments; defaults to `eps`.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub lambda: f64,
}

impl MomentQuery {
    pub fn new(ell: usize, hurst: Hurst, t: f64, eps: f64) -> Result<Self> {
        let q = Self {
            ell,
            hurst,
            t,
            eps,
            eta: None,
            lambda: 0.0,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = Some(eta);
        self
    }

    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or(self.eps)
    }

    fn validate(&self) -> Result<()> {
        let ok = |x: f64| x > 0.0 && x.is_finite();
        if !ok(self.eps) || !ok(self.eta()) {
            return Err(Error::domain(format!(
                "mollifier widths must be positive, got eps={}, eta={}",
                self.eps,
                self.eta()
            )));
        }
        if !ok(self.t) {
            return Err(Error::domain(format!("horizon must be positive, got {}", self.t)));
        }
        if !self.lambda.is_finite() {
            return Err(Error::domain("level lambda must be finite"));
        }
        Ok(())
    }
}

/// Accuracy controls for the moment oracles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub rel_tol: f64,
    pub max_intervals: usize,
    pub exec: Exec,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            max_intervals: 4000,
            exec: Exec::Parallel,
        }
    }
}

impl OracleOptions {
    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }
}

/// An oracle value with its quadrature diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub value: f64,
    pub error_bound: f64,
    pub panels: usize,
    pub evaluations: usize,
}

fn check_pd(m11: f64, m12: f64, m22: f64) -> Result<f64> {
    let det = m11 * m22 - m12 * m12;
    if !(m11 > 0.0 && m22 > 0.0 && det > 0.0) || !det.is_finite() {
        return Err(Error::domain(format!(
            "matrix [[{m11}, {m12}], [{m12}, {m22}]] is not positive definite"
        )));
    }
    Ok(det)
}

/// `int_{R^2} xi^l xi~^l exp(-xi' M xi / 2) dxi dxi~
///  = 2 pi |M|^{-1/2} E[Z_1^l Z_2^l]`, `Z ~ N(0, M^{-1})`,
/// by whitened Gauss–Hermite quadrature.
pub fn gaussian_pair_moment(ell: usize, m11: f64, m12: f64, m22: f64) -> Result<f64> {
    let det = check_pd(m11, m12, m22)?;
    Ok(pair_moment(ell, m11, m22, m12, det, &GaussHermite::new(PAIR_GH_ORDER)))
}

/// Pair moment with an externally supplied determinant (which callers can
/// compute without cancellation) and quadrature rule.
///
/// `E[Z_1^l Z_2^l] = |M|^{-l} E[W_1^l W_2^l]` with `W ~ N(0, adj M)`; `W`
/// is whitened by the Cholesky factor of `adj M`, pivoting on the larger
/// diagonal entry. The result is symmetric in `(m11, m22)` bit for bit.
pub(crate) fn pair_moment(ell: usize, m11: f64, m22: f64, m12: f64, det: f64, gh: &GaussHermite) -> f64 {
    let prefactor = 2.0 * PI * det.powf(-0.5 - ell as f64);
    if ell == 0 {
        return prefactor;
    }
    let (c11, c21, c22) = whiten(m11, m22, m12, det);
    let e = ell as i32;
    let mut acc = 0.0;
    for (&y1, &w1) in gh.nodes.iter().zip(&gh.weights) {
        let a = (c11 * y1).powi(e);
        let mut inner = 0.0;
        for (&y2, &w2) in gh.nodes.iter().zip(&gh.weights) {
            inner += w2 * (c21 * y1 + c22 * y2).powi(e);
        }
        acc += w1 * a * inner;
    }
    prefactor * acc
}

fn whiten(m11: f64, m22: f64, m12: f64, det: f64) -> (f64, f64, f64) {
    // adj M = [[big, -m12], [-m12, small]] up to a swap of coordinates
    let big = m11.max(m22);
    let c11 = big.sqrt();
    (c11, -m12 / c11, (det / big).max(0.0).sqrt())
}

/// `(n - 1)!!`, the `n`-th moment of a standard normal for even `n`.
fn normal_moment(n: usize) -> f64 {
    if n % 2 == 1 {
        return 0.0;
    }
    (1..n).step_by(2).map(|k| k as f64).product()
}

/// [`pair_moment`] with the whitened expectation expanded binomially:
/// `E[(c11 Y1)^l (c21 Y1 + c22 Y2)^l]
///  = sum_k C(l,k) c11^l c21^k c22^(l-k) E[Y1^(l+k)] E[Y2^(l-k)]`.
/// All surviving terms share a sign, so there is no cancellation when
/// `c21` is tiny next to `c22`, which quadrature cannot resolve.
pub(crate) fn pair_moment_exact(ell: usize, m11: f64, m22: f64, m12: f64, det: f64) -> f64 {
    let prefactor = 2.0 * PI * det.powf(-0.5 - ell as f64);
    if ell == 0 {
        return prefactor;
    }
    let (c11, c21, c22) = whiten(m11, m22, m12, det);
    let mut acc = 0.0;
    let mut binom = 1.0;
    for k in 0..=ell {
        if (ell + k).is_multiple_of(2) {
            acc += binom * c21.powi(k as i32) * c22.powi((ell - k) as i32) * normal_moment(ell + k) * normal_moment(ell - k);
        }
        binom *= (ell - k) as f64 / (k + 1) as f64;
    }
    prefactor * c11.powi(ell as i32) * acc
}

/// `E[L_{t,eps}^(l)(lambda)] = int_0^t phi_{eps + s^{2H}}^(l)(-lambda) ds`.
pub fn dlt_first_moment(q: &MomentQuery, opts: &OracleOptions) -> Result<OracleValue> {
    q.validate()?;
    let two_h = q.hurst.two_h();
    let alpha = q.hurst.value() * (q.ell as f64 + 1.0);
    let qopts = QuadOptions::with_tol(0.0, opts.rel_tol)
        .max_intervals(opts.max_intervals)
        .initial_intervals(4)
        .exec(opts.exec);
    let ell = q.ell;
    let r = integrate_graded_left(
        |s: f64| mollifier_deriv_raw(ell, q.eps + s.powf(two_h), -q.lambda),
        0.0,
        q.t,
        grading_exponent(alpha, MAX_GRADING),
        &qopts,
    );
    let r = match r {
        // odd orders at lambda = 0 vanish identically
        Ok(r) => r,
        Err(Error::Accuracy { estimate, error_bound, .. }) if estimate == 0.0 && error_bound == 0.0 => {
            return Ok(OracleValue {
                value: 0.0,
                error_bound: 0.0,
                panels: 0,
                evaluations: 0,
            })
        }
        Err(e) => return Err(e),
    };
    Ok(OracleValue {
        value: r.value,
        error_bound: r.error,
        panels: r.intervals,
        evaluations: r.evaluations,
    })
}

/// The two off-diagonal orderings of `(X_s, X_a)` with `a = s - r < s`,
/// mollified by `(eps, eta)`, summed. Symmetric in `(eps, eta)` bit for bit.
struct PairIntegrand {
    ell: usize,
    two_h: f64,
    eps: f64,
    eta: f64,
}

impl PairIntegrand {
    fn eval(&self, s: f64, a: f64, r: f64) -> f64 {
        let two_h = self.two_h;
        let big = s.powf(two_h);
        let small = a.powf(two_h);
        let rho = r.powf(two_h);
        // s^{2H} - a^{2H} without cancellation
        let d = if a > 0.0 { small * (two_h * (r / a).ln_1p()).exp_m1() } else { big };
        let half_gap = 0.5 * (d - rho);
        let det_sigma = (small * rho - half_gap * half_gap).max(0.0);
        let c = small + half_gap;
        let (eps, eta) = (self.eps, self.eta);
        let det1 = det_sigma + (eps * small + eta * big) + eps * eta;
        let det2 = det_sigma + (eps * big + eta * small) + eps * eta;
        pair_moment_exact(self.ell, big + eps, small + eta, c, det1) + pair_moment_exact(self.ell, small + eps, big + eta, c, det2)
    }
}

/// `E[L_{t,eps}^(l)(0) L_{t,eta}^(l)(0)]`
/// `= ((-1)^l / 4 pi^2) int_{[0,t]^2} P_l(Sigma(s, s~) + diag(eps, eta))`,
/// with `P_l` the Gaussian pair moment.
///
/// The square is folded onto the triangle `s~ < s`. The outer variable is
/// graded toward `s = 0`; the inner integral is split at `s/2` and graded
/// toward `s~ = 0` and toward the diagonal, with exponents from the
/// singularity powers `H(l+1)` and `H(2l+1)`. The pair moments are
/// evaluated in closed form rather than by quadrature.
pub fn dlt_second_moment(q: &MomentQuery, opts: &OracleOptions) -> Result<OracleValue> {
    q.validate()?;
    if q.lambda != 0.0 {
        return Err(Error::domain(format!(
            "second-moment oracle is only available at lambda = 0, got {}",
            q.lambda
        )));
    }
    let h = q.hurst.value();
    let l = q.ell as f64;
    let integrand = PairIntegrand {
        ell: q.ell,
        two_h: q.hurst.two_h(),
        eps: q.eps,
        eta: q.eta(),
    };
    let q_zero = grading_exponent(h * (l + 1.0), MAX_GRADING);
    let q_diag = grading_exponent(h * (2.0 * l + 1.0), MAX_GRADING);
    let q_outer = grading_exponent(2.0 * h * (l + 1.0) - 1.0, MAX_GRADING);
    let inner_tol = opts.rel_tol * 0.1;
    let inner_opts = QuadOptions::with_tol(0.0, inner_tol)
        .max_intervals(opts.max_intervals)
        .initial_intervals(2)
        .exec(Exec::Sequential);
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let inner_evals = std::sync::atomic::AtomicUsize::new(0);
    let inner = |s: f64| -> f64 {
        let half = 0.5 * s;
        let left = integrate_graded_left(|a| integrand.eval(s, a, s - a), 0.0, half, q_zero, &inner_opts);
        let right = integrate_graded_right(|r| integrand.eval(s, s - r, r), half, s, q_diag, &inner_opts);
        match (left, right) {
            (Ok(a), Ok(b)) => {
                inner_evals.fetch_add(a.evaluations + b.evaluations, std::sync::atomic::Ordering::Relaxed);
                a.value + b.value
            }
            (Err(e), _) | (_, Err(e)) => {
                failure.lock().expect("oracle failure slot").get_or_insert(e);
                f64::NAN
            }
        }
    };
    let outer_opts = QuadOptions::with_tol(0.0, opts.rel_tol)
        .max_intervals(opts.max_intervals)
        .initial_intervals(4)
        .exec(opts.exec);
    let outer = integrate_graded_left(inner, 0.0, q.t, q_outer, &outer_opts);
    if let Some(e) = failure.into_inner().expect("oracle failure slot") {
        return Err(match e {
            Error::Accuracy {
                estimate,
                error_bound,
                detail,
            } => Error::Accuracy {
                estimate,
                error_bound,
                detail: format!("inner integral of the second moment: {detail}"),
            },
            other => other,
        });
    }
    let sign = if q.ell.is_multiple_of(2) { 1.0 } else { -1.0 };
    let scale = sign / (4.0 * PI * PI);
    let r = outer.map_err(|e| match e {
        Error::Accuracy {
            estimate,
            error_bound,
            detail,
        } => Error::Accuracy {
            estimate: estimate * scale,
            error_bound: error_bound * scale.abs(),
            detail,
        },
        other => other,
    })?;
    let value = r.value * scale;
    Ok(OracleValue {
        value,
        error_bound: r.error * scale.abs() + inner_tol * value.abs(),
        panels: r.intervals,
        evaluations: r.evaluations + inner_evals.into_inner(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Converging,
    Diverging,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceProbeResult {
    pub ell: usize,
    pub hurst: Hurst,
    pub t: f64,
    pub eps_schedule: Vec<f64>,
    pub second_moments: Vec<f64>,
    pub growth_ratios: Vec<f64>,
    /// Every growth ratio exceeds 1, i.e. the second moments increase.
    pub moments_increasing: bool,
    /// The growth ratios themselves are nondecreasing. Informational: a
    /// power-law blow-up `C eps^-g + D` has ratios approaching `4^g` from
    /// above whenever `D < 0`.
    pub ratios_nondecreasing: bool,
    /// `(eps_k / eps_{k+1})^g` with `g = (H(2l+1) - 1) / 2H`, the limiting
    /// ratio of a power-law blow-up, when `H(2l+1) > 1`.
    pub predicted_ratio: Option<f64>,
    pub verdict: Verdict,
    /// Set when a divergence verdict concerns an odd order, for which the
    /// nonexistence argument is only stated for even orders.
    pub extrapolated: bool,
    /// `H(2l+1)`; the mollified second moments stay bounded iff this is < 1.
    pub singularity_power: f64,
}

/// `eps_k = 0.1 * 4^-k`, `k = 0..=7`.
pub fn default_eps_schedule() -> Vec<f64> {
    (0..8).map(|k| 0.1 * 0.25f64.powi(k)).collect()
}

/// Second moments along a decreasing schedule and their growth ratios.
///
/// Converging when the last ratio is below 1.10; diverging when the moments
/// increase along the whole schedule and the last ratio exceeds 1.20.
pub fn divergence_probe(ell: usize, hurst: Hurst, t: f64, schedule: &[f64], opts: &OracleOptions) -> Result<DivergenceProbeResult> {
    if schedule.len() < 4 {
        return Err(Error::domain(format!(
            "divergence probe needs at least 4 widths, got {}",
            schedule.len()
        )));
    }
    if schedule.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::domain("divergence probe schedule must be strictly decreasing"));
    }
    let mut second_moments = Vec::with_capacity(schedule.len());
    for &eps in schedule {
        let q = MomentQuery::new(ell, hurst, t, eps)?;
        second_moments.push(dlt_second_moment(&q, opts)?.value);
    }
    let growth_ratios: Vec<f64> = second_moments.windows(2).map(|w| w[1] / w[0]).collect();
    if let Some(bad) = growth_ratios.iter().find(|r| !(**r > 0.0)) {
        return Err(Error::numerical(format!("nonpositive second-moment ratio {bad}")));
    }
    let last = *growth_ratios.last().expect("at least 3 ratios");
    let moments_increasing = growth_ratios.iter().all(|&r| r > 1.0);
    let ratios_nondecreasing = growth_ratios.windows(2).all(|w| w[1] >= w[0]);
    let power = hurst.value() * (2.0 * ell as f64 + 1.0);
    let predicted_ratio = (power > 1.0).then(|| {
        let k = schedule.len() - 2;
        (schedule[k] / schedule[k + 1]).powf((power - 1.0) / hurst.two_h())
    });
    let verdict = if last < CONVERGING_RATIO {
        Verdict::Converging
    } else if moments_increasing && last > DIVERGING_RATIO {
        Verdict::Diverging
    } else {
        Verdict::Inconclusive
    };
    Ok(DivergenceProbeResult {
        ell,
        hurst,
        t,
        eps_schedule: schedule.to_vec(),
        second_moments,
        growth_ratios,
        moments_increasing,
        ratios_nondecreasing,
        predicted_ratio,
        verdict,
        extrapolated: verdict == Verdict::Diverging && ell % 2 == 1,
        singularity_power: power,
    })
}

/// Smallest increment width, relative to the horizon, drawn by the audit.
pub const AUDIT_MIN_WIDTH: f64 = 1e-5;

/// Worst observed ratios of the increment covariance bounds for one `H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundAuditEntry {
    pub hurst: f64,
    pub samples: usize,
    /// `|<1_[u,u+h], 1_[v,v+k]>| / (2^{2-2H} H |2H-1| h k |v-u|^{2H-2})`.
    pub max_ratio_disjoint: f64,
    /// `|<1_[u,u+h], 1_[0,w]>| / (h^{2H} or T^{2H-1} h)`.
    pub max_ratio_initial: f64,
    /// As `max_ratio_initial` with the bound `2H T^{2H-1} h` for `H >= 1/2`.
    pub max_ratio_initial_2h: f64,
    /// `(u, h, w, T)` attaining `max_ratio_initial`.
    pub worst_initial: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundAudit {
    pub horizon: f64,
    pub seed: u64,
    pub entries: Vec<BoundAuditEntry>,
    /// Largest ratio over both bounds and all `H`.
    pub max_ratio: f64,
}

impl BoundAudit {
    pub fn passes(&self) -> bool {
        self.max_ratio <= 1.0 + 1e-10
    }
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else if rhs == 0.0 {
        f64::INFINITY
    } else {
        lhs.abs() / rhs
    }
}

/// Samples `(u, h, v, k, w)` in `[0, T]` with `2h <= v - u` and `v + k <= T`;
/// `h` is log-uniform on `[1e-5 T, (v - u) / 2]`. Below that floor the
/// four-term covariance difference loses more than 1e-10 of relative
/// accuracy, which would swamp the exactly tight `H = 1/2` case.
pub fn covariance_bound_audit(samples: usize, hursts: &[f64], horizon: f64, seed: u64) -> Result<BoundAudit> {
    if samples == 0 {
        return Err(Error::domain("bound audit needs at least one sample"));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
    }
    let mut entries = Vec::with_capacity(hursts.len());
    for (idx, &hv) in hursts.iter().enumerate() {
        let hurst = Hurst::new(hv)?;
        let e2 = hurst.two_h();
        let mut rng = StreamId::new(seed, idx as u64).rng();
        let mut entry = BoundAuditEntry {
            hurst: hv,
            samples,
            max_ratio_disjoint: 0.0,
            max_ratio_initial: 0.0,
            max_ratio_initial_2h: 0.0,
            worst_initial: [0.0; 4],
        };
        let t = horizon;
        let mut drawn = 0;
        while drawn < samples {
            let u = rng.random::<f64>() * t;
            let v = u + rng.random::<f64>() * (t - u);
            let (h_lo, h_hi) = (AUDIT_MIN_WIDTH * t, 0.5 * (v - u));
            if !(h_hi > h_lo) {
                continue;
            }
            let h = h_lo * (h_hi / h_lo).powf(rng.random::<f64>());
            let k = (t - v) * rng.random::<f64>();
            let w = rng.random::<f64>() * t;
            if !(h > 0.0 && k > 0.0 && w > 0.0) {
                continue;
            }
            drawn += 1;
            let lhs = increment_inner_product(u, h, v, k, hurst)?;
            let rhs = 2f64.powf(2.0 - e2) * hv * (e2 - 1.0).abs() * h * k * (v - u).powf(e2 - 2.0);
            entry.max_ratio_disjoint = entry.max_ratio_disjoint.max(ratio(lhs, rhs));
            let lhs0 = increment_inner_product(u, h, 0.0, w, hurst)?;
            let (rhs0, rhs0_2h) = if hv < 0.5 {
                (h.powf(e2), h.powf(e2))
            } else {
                (t.powf(e2 - 1.0) * h, e2 * t.powf(e2 - 1.0) * h)
            };
            let r0 = ratio(lhs0, rhs0);
            if r0 > entry.max_ratio_initial {
                entry.max_ratio_initial = r0;
                entry.worst_initial = [u, h, w, t];
            }
            entry.max_ratio_initial_2h = entry.max_ratio_initial_2h.max(ratio(lhs0, rhs0_2h));
        }
        entries.push(entry);
    }
    let max_ratio = entries
        .iter()
        .map(|e| e.max_ratio_disjoint.max(e.max_ratio_initial))
        .fold(0.0, f64::max);
    Ok(BoundAudit {
        horizon,
        seed,
        entries,
        max_ratio,
    })
}

/// `map_indexed` over a list of queries; used by the CLI for batches.
pub fn second_moments(queries: &[MomentQuery], opts: &OracleOptions) -> Vec<Result<OracleValue>> {
    map_indexed(opts.exec, queries.len(), |i| {
        dlt_second_moment(&queries[i], &opts.exec(Exec::Sequential))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(v: f64) -> Hurst {
        Hurst::new(v).unwrap()
    }

    #[test]
    fn pair_moment_examples() {
        assert!((gaussian_pair_moment(0, 1.0, 0.0, 1.0).unwrap() - 2.0 * PI).abs() < 1e-13);
        assert!(gaussian_pair_moment(1, 1.0, 0.0, 1.0).unwrap().abs() < 1e-13);
        // 2 pi |M|^{-1/2} (M^{-1})_{12}
        let det: f64 = 0.75;
        let expected = 2.0 * PI * det.powf(-0.5) * (-0.5 / det);
        assert!((gaussian_pair_moment(1, 1.0, 0.5, 1.0).unwrap() - expected).abs() < 1e-12);
        assert!(gaussian_pair_moment(1, 1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn pair_moment_isserlis() {
        // E[Z1^2 Z2^2] = s11 s22 + 2 s12^2 for Z ~ N(0, S)
        for (m11, m12, m22) in [(2.0, 0.3, 0.7), (0.4, -0.1, 5.0), (1.0, 0.99, 1.0)] {
            let det: f64 = m11 * m22 - m12 * m12;
            let (s11, s12, s22) = (m22 / det, -m12 / det, m11 / det);
            let e2 = s11 * s22 + 2.0 * s12 * s12;
            let e3 = 9.0 * s11 * s22 * s12 + 6.0 * s12.powi(3);
            let base = 2.0 * PI / det.sqrt();
            let p2 = gaussian_pair_moment(2, m11, m12, m22).unwrap();
            let p3 = gaussian_pair_moment(3, m11, m12, m22).unwrap();
            assert!((p2 - base * e2).abs() < 1e-10 * (base * e2).abs(), "{p2} vs {}", base * e2);
            assert!((p3 - base * e3).abs() < 1e-10 * (base * e3).abs().max(1.0));
            // closed form agrees with quadrature, including the minimal exact rule
            for ell in 0..=6 {
                let exact = pair_moment_exact(ell, m11, m22, m12, det);
                let small = pair_moment(ell, m11, m22, m12, det, &GaussHermite::new(ell + 1));
                let hi = gaussian_pair_moment(ell, m11, m12, m22).unwrap();
                let scale = exact.abs().max(1e-300);
                assert!((exact - hi).abs() <= 1e-11 * scale.max(hi.abs()), "l={ell}: {exact} vs {hi}");
                assert!(
                    (exact - small).abs() <= 1e-11 * scale.max(small.abs()),
                    "l={ell}: {exact} vs {small}"
                );
            }
        }
    }

    #[test]
    fn pair_moment_weak_correlation() {
        // quadrature leaves a residual near 1e-16; the closed form does not
        let m12 = 1e-20;
        let det = 1.0 - m12 * m12;
        let v = pair_moment_exact(1, 1.0, 1.0, m12, det);
        assert!((v / (-2.0 * PI * m12) - 1.0).abs() < 1e-14, "{v}");
    }

    #[test]
    fn first_moment_examples() {
        let o = OracleOptions::default();
        let q = MomentQuery::new(1, h(0.3), 1.0, 0.01).unwrap();
        assert_eq!(dlt_first_moment(&q, &o).unwrap().value, 0.0);
        let q = MomentQuery::new(0, h(0.5), 1.0, 1e-14).unwrap();
        let v = dlt_first_moment(&q, &o).unwrap().value;
        assert!((v - 2.0 / (2.0 * PI).sqrt()).abs() < 1e-6, "{v}");
        let q = MomentQuery::new(0, h(0.3), 1.0, 0.01).unwrap().with_lambda(0.5);
        let a = dlt_first_moment(&q, &o).unwrap().value;
        let b = dlt_first_moment(&q, &o.with_rel_tol(5e-9)).unwrap().value;
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }

    #[test]
    fn first_moment_brownian_closed_form() {
        // H = 1/2, l = 0: int_0^1 phi_{eps+s}(0) ds = (2/sqrt(2 pi)) (sqrt(eps+1) - sqrt(eps))
        for eps in [0.3, 0.02, 1e-5] {
            let q = MomentQuery::new(0, h(0.5), 1.0, eps).unwrap();
            let v = dlt_first_moment(&q, &OracleOptions::default()).unwrap().value;
            let expected = 2.0 / (2.0 * PI).sqrt() * ((eps + 1.0f64).sqrt() - eps.sqrt());
            assert!((v - expected).abs() < 1e-9, "eps={eps}: {v} vs {expected}");
        }
    }

    #[test]
    fn second_moment_brownian_local_time_limit() {
        // H = 1/2, l = 0: E[L_1(0)^2] = E[|Z|^2] = 1 (Levy)
        let q = MomentQuery::new(0, h(0.5), 1.0, 1e-7).unwrap();
        let v = dlt_second_moment(&q, &OracleOptions::default()).unwrap();
        assert!((v.value - 1.0).abs() < 2e-3, "{v:?}");
    }

    #[test]
    fn second_moment_symmetric_in_widths() {
        let o = OracleOptions::default();
        for (ell, hv) in [(0, 0.3), (1, 0.2), (2, 0.15)] {
            let a = dlt_second_moment(&MomentQuery::new(ell, h(hv), 1.0, 0.05).unwrap().with_eta(0.01), &o).unwrap();
            let b = dlt_second_moment(&MomentQuery::new(ell, h(hv), 1.0, 0.01).unwrap().with_eta(0.05), &o).unwrap();
            assert!((a.value - b.value).abs() <= 1e-10 * a.value.abs(), "{a:?} {b:?}");
        }
    }

    #[test]
    fn second_moment_wide_mollifier_limit() {
        // eps -> infinity: L_eps ~ t phi_eps(0), so E[L^2] ~ t^2 / (2 pi eps)
        let eps = 1e6;
        let q = MomentQuery::new(0, h(0.3), 1.0, eps).unwrap();
        let v = dlt_second_moment(&q, &OracleOptions::default()).unwrap().value;
        let limit = 1.0 / (2.0 * PI * eps);
        assert!((v / limit - 1.0).abs() < 1e-5, "{v} vs {limit}");
    }

    #[test]
    fn second_moment_rejects_nonzero_level() {
        let q = MomentQuery::new(0, h(0.3), 1.0, 0.1).unwrap().with_lambda(0.2);
        assert!(dlt_second_moment(&q, &OracleOptions::default()).is_err());
    }

    #[test]
    fn probe_validates_schedule() {
        let o = OracleOptions::default();
        assert!(divergence_probe(1, h(0.2), 1.0, &[0.1, 0.05, 0.02], &o).is_err());
        assert!(divergence_probe(1, h(0.2), 1.0, &[0.1, 0.05, 0.05, 0.01], &o).is_err());
    }

    #[test]
    fn audit_brownian_disjoint_is_zero() {
        let a = covariance_bound_audit(500, &[0.5], 1.0, 3).unwrap();
        assert_eq!(a.entries[0].max_ratio_disjoint, 0.0);
        assert!(a.entries[0].max_ratio_initial <= 1.0 + 1e-10);
    }

    #[test]
    fn bounds_in_vanishing_width_limit() {
        for hv in [0.2, 0.8] {
            let hu = h(hv);
            let mut prev = f64::INFINITY;
            for width in [1e-2, 1e-4, 1e-6] {
                let lhs = increment_inner_product(0.3, width, 0.6, 0.2, hu).unwrap();
                let e2 = 2.0 * hv;
                let rhs = 2f64.powf(2.0 - e2) * hv * (e2 - 1.0).abs() * width * 0.2 * 0.3f64.powf(e2 - 2.0);
                assert!(lhs.abs() < 0.1 * prev && ratio(lhs, rhs) <= 1.0, "H={hv} h={width}: {lhs} {rhs}");
                prev = lhs.abs();
            }
        }
    }

    #[test]
    fn second_moment_cauchy_below_threshold() {
        let o = OracleOptions::default();
        let m: Vec<f64> = [0.04, 0.02, 0.01, 0.005]
            .iter()
            .map(|&e| dlt_second_moment(&MomentQuery::new(1, h(0.2), 1.0, e).unwrap(), &o).unwrap().value)
            .collect();
        let diffs: Vec<f64> = m.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(diffs.iter().all(|&d| d > 0.0));
        assert!(diffs.windows(2).all(|w| w[1] < 0.8 * w[0]), "{m:?}");
    }

    #[test]
    fn probe_verdict_table() {
        let o = OracleOptions::default();
        let s = default_eps_schedule();
        let v = |l, hv| divergence_probe(l, h(hv), 1.0, &s, &o).unwrap();
        assert_eq!(v(0, 0.7).verdict, Verdict::Converging);
        let d = v(2, 0.25);
        assert_eq!(d.verdict, Verdict::Diverging);
        assert!(!d.extrapolated);
        let r = d.predicted_ratio.unwrap();
        assert!((d.growth_ratios.last().unwrap() / r - 1.0).abs() < 0.02, "{d:?}");
        let odd = v(1, 0.4);
        assert!(odd.extrapolated && odd.predicted_ratio.is_some());
    }

    #[test]
    fn audit_small_hurst_within_bounds() {
        let a = covariance_bound_audit(2000, &[0.2, 0.35], 1.5, 9).unwrap();
        assert!(a.passes(), "{a:?}");
    }
}
