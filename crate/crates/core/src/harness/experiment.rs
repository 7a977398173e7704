use std::time::Instant;

use rand::Rng;

use super::config::{hypothesis_warnings, kappa_star, sup_regime, ExperimentConfig, ExperimentKind};
use super::fit::{fit_power_law, fit_rate, RateFit};
use super::report::{Check, ErrorRow, HolderDetail, MomentCurve, RawReplication, Report, SecondOrderDetail, Theory, Timing, REPORT_SCHEMA};
use crate::error::{Error, Result};
use crate::fbm::{simulate_stream, subsample, FbmPath, TimeGrid};
use crate::kernel::compute_moments;
use crate::local_time::{g_statistic_value, mollified_dlt, mollified_dlt_between, PathView, StatisticSpec};
use crate::par::{current_threads, map_indexed, pairwise_sum, Exec};
use crate::rng::{RngProvenance, StreamId, GENERATOR_NAME};

/// Largest share of replications that may be quarantined.
pub const MAX_QUARANTINE_FRACTION: f64 = 0.01;
/// Auxiliary streams (pair times of the Hölder experiment) are offset by this.
pub const AUX_STREAM_OFFSET: u64 = 1 << 63;
/// Slack subtracted from the Hölder exponent before comparing fits.
pub const HOLDER_SLACK: f64 = 0.15;

/// Runs `cfg` on replications `0..cfg.replications` in parallel.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    run_experiment_with(cfg, Exec::Parallel)
}

pub fn run_experiment_with(cfg: &ExperimentConfig, exec: Exec) -> Result<Report> {
    let streams: Vec<u64> = (0..cfg.replications as u64).collect();
    run_on_streams(cfg, &streams, exec)
}

/// Runs `cfg` on an explicit list of replication streams. Aggregates do not
/// depend on the order of `streams`.
pub fn run_on_streams(cfg: &ExperimentConfig, streams: &[u64], exec: Exec) -> Result<Report> {
    let start = Instant::now();
    cfg.validate()?;
    let threads = current_threads(exec);
    cfg.check_resources(threads)?;
    if streams.len() < 2 {
        return Err(Error::config("need at least 2 replication streams"));
    }
    let ctx = Context::new(cfg)?;
    let outcomes = map_indexed(exec, streams.len(), |i| ctx.replicate(streams[i]));
    let mut kept = Vec::with_capacity(outcomes.len());
    let mut quarantined = 0;
    for o in outcomes {
        match o {
            Ok(r) if r.is_finite() => kept.push(r),
            Ok(_) => quarantined += 1,
            Err(e) if e.is_numerical() => quarantined += 1,
            Err(e) => return Err(e),
        }
    }
    if quarantined as f64 > MAX_QUARANTINE_FRACTION * streams.len() as f64 {
        return Err(Error::numerical(format!(
            "{quarantined} of {} replications produced non-finite values",
            streams.len()
        )));
    }
    let mut report = ctx.assemble(&kept, quarantined)?;
    if let Some(first) = streams.first() {
        if cfg.kind != ExperimentKind::Holder {
            report.checks.push(ctx.nesting_check(*first)?);
        }
    }
    if cfg.kind == ExperimentKind::Holder {
        report.provenance.stream_rule =
            format!("path stream = replication index; pair-time stream = replication index + {AUX_STREAM_OFFSET}");
    }
    report.timing = Timing {
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        threads,
    };
    Ok(report)
}

struct Replication {
    stream: u64,
    /// Per-row signed errors (lln, sup) or `+` residuals (second order) or
    /// increments (holder).
    primary: Vec<f64>,
    /// `-` residuals for second order.
    secondary: Vec<f64>,
    statistics: Vec<f64>,
    reference: Vec<f64>,
}

impl Replication {
    fn is_finite(&self) -> bool {
        self.primary.iter().chain(&self.secondary).all(|v| v.is_finite())
    }
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    grid: TimeGrid,
    eps: f64,
    mu: f64,
    mu_tilde: f64,
    times: Vec<f64>,
}

impl<'a> Context<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        let (mu, mu_tilde) = if cfg.kind == ExperimentKind::Holder {
            (0.0, 0.0)
        } else {
            let m = compute_moments(&cfg.kernel, &[], &[])?;
            (m.mu, m.mu_tilde)
        };
        Ok(Self {
            cfg,
            grid: TimeGrid::new(cfg.n_max, cfg.horizon())?,
            eps: cfg.reference_epsilon(),
            mu,
            mu_tilde,
            times: cfg.times(),
        })
    }

    fn path(&self, stream: u64) -> Result<FbmPath> {
        simulate_stream(self.grid, self.cfg.hurst()?, StreamId::new(self.cfg.seed, stream), self.cfg.method)
    }

    fn spec(&self, ell: usize, t: f64) -> Result<StatisticSpec> {
        StatisticSpec::new(ell, self.cfg.a(), self.cfg.lambda, t)
    }

    /// Raw `G` on the grid of size `n`, and its normalization.
    fn statistic(&self, values: &[f64], n: usize, t: f64) -> Result<(f64, f64)> {
        let factor = self.cfg.n_max / n;
        let coarse: Vec<f64> = values.iter().step_by(factor).copied().collect();
        let raw = g_statistic_value(PathView::new(&coarse, n)?, &self.cfg.kernel, &self.spec(self.cfg.ell, t)?, false)?;
        let norm = (n as f64).powf(self.cfg.a() * (self.cfg.ell as f64 + 1.0) - 1.0);
        Ok((raw, raw * norm))
    }

    fn replicate(&self, stream: u64) -> Result<Replication> {
        let cfg = self.cfg;
        let path = self.path(stream)?;
        let values = path.values();
        let mut out = Replication {
            stream,
            primary: Vec::new(),
            secondary: Vec::new(),
            statistics: Vec::new(),
            reference: Vec::new(),
        };
        match cfg.kind {
            ExperimentKind::Lln => {
                let reference = mollified_dlt(&path, &self.spec(cfg.ell, cfg.t)?, self.eps)?.value;
                out.reference.push(reference);
                for &n in &cfg.n_values {
                    let (raw, stat) = self.statistic(values, n, cfg.t)?;
                    out.statistics.push(raw);
                    out.primary.push(stat - self.mu * reference);
                }
            }
            ExperimentKind::SupConvergence => {
                for &t in &self.times {
                    out.reference.push(mollified_dlt(&path, &self.spec(cfg.ell, t)?, self.eps)?.value);
                }
                for &n in &cfg.n_values {
                    let mut worst: f64 = 0.0;
                    for (j, &t) in self.times.iter().enumerate() {
                        let (raw, stat) = self.statistic(values, n, t)?;
                        out.statistics.push(raw);
                        let dev = (stat - self.mu * out.reference[j]).abs();
                        // NaN must survive the max
                        worst = if dev.is_nan() { f64::NAN } else { worst.max(dev) };
                    }
                    out.primary.push(worst);
                }
            }
            ExperimentKind::SecondOrder => {
                let r0 = mollified_dlt(&path, &self.spec(cfg.ell, cfg.t)?, self.eps)?.value;
                let r1 = mollified_dlt(&path, &self.spec(cfg.ell + 1, cfg.t)?, self.eps)?.value;
                out.reference = vec![r0, r1];
                for &n in &cfg.n_values {
                    let (raw, stat) = self.statistic(values, n, cfg.t)?;
                    out.statistics.push(raw);
                    let base = (n as f64).powf(cfg.a()) * (stat - self.mu * r0);
                    out.primary.push(base + self.mu_tilde * r1);
                    out.secondary.push(base - self.mu_tilde * r1);
                }
            }
            ExperimentKind::Holder => {
                let mut rng = StreamId::new(cfg.seed, stream.wrapping_add(AUX_STREAM_OFFSET)).rng();
                let span = self.grid.floor_index(cfg.t);
                let nm = cfg.n_max as f64;
                for &lag in &cfg.lags {
                    let i0 = rng.random_range(0..=span - lag);
                    let inc = mollified_dlt_between(&path, cfg.ell, cfg.lambda, self.eps, i0 as f64 / nm, (i0 + lag) as f64 / nm)?.value;
                    out.primary.push(inc);
                }
            }
        }
        Ok(out)
    }

    /// Statistics from the strided view and from `subsample` must agree bitwise.
    fn nesting_check(&self, stream: u64) -> Result<Check> {
        let path = self.path(stream)?;
        let t = self.times[0].min(self.cfg.t);
        let mut mismatches = Vec::new();
        for &n in &self.cfg.n_values {
            let strided = self.statistic(path.values(), n, t)?.1;
            let coarse = subsample(&path, self.cfg.n_max / n)?;
            let direct = g_statistic_value((&coarse).into(), &self.cfg.kernel, &self.spec(self.cfg.ell, t)?, true)?;
            if strided.to_bits() != direct.to_bits() {
                mismatches.push(n);
            }
        }
        Ok(Check::new(
            "nesting",
            mismatches.is_empty(),
            if mismatches.is_empty() {
                format!("stream {stream}: subsampled and strided statistics agree bitwise")
            } else {
                format!("stream {stream}: mismatch at n = {mismatches:?}")
            },
        ))
    }

    fn assemble(&self, reps: &[Replication], quarantined: usize) -> Result<Report> {
        let cfg = self.cfg;
        let mut report = Report {
            schema: REPORT_SCHEMA.to_string(),
            config: cfg.clone(),
            reference_epsilon: self.eps,
            rows: Vec::new(),
            fit: None,
            theory: self.theory(),
            checks: Vec::new(),
            warnings: hypothesis_warnings(cfg),
            quarantined,
            second_order: None,
            holder: None,
            raw: None,
            provenance: RngProvenance::for_replications(cfg.seed),
            timing: Timing {
                wall_clock_seconds: 0.0,
                threads: 0,
            },
        };
        debug_assert_eq!(report.provenance.generator, GENERATOR_NAME);
        if cfg.kind == ExperimentKind::SupConvergence {
            report.warnings.push(format!("regime: {}", sup_regime(cfg)));
        }
        match cfg.kind {
            ExperimentKind::Holder => self.assemble_holder(reps, &mut report)?,
            ExperimentKind::SecondOrder => {
                let plus = rms_rows(&cfg.n_values, reps, |r| &r.primary);
                let minus = rms_rows(&cfg.n_values, reps, |r| &r.secondary);
                let fit_plus = try_fit(&plus);
                let fit_minus = try_fit(&minus);
                let last = plus.len() - 1;
                let selected_sign: i8 = if plus[last].l2_error <= minus[last].l2_error { 1 } else { -1 };
                let (rows, fit) = if selected_sign > 0 {
                    (plus.clone(), fit_plus)
                } else {
                    (minus.clone(), fit_minus)
                };
                report.rows = rows;
                report.fit = fit;
                report.checks.push(decreasing_check(&report.rows));
                report.checks.push(slope_check(report.fit.as_ref()));
                report.second_order = Some(SecondOrderDetail {
                    mu: self.mu,
                    mu_tilde: self.mu_tilde,
                    selected_sign,
                    rows_plus: plus,
                    rows_minus: minus,
                    fit_plus,
                    fit_minus,
                });
            }
            ExperimentKind::Lln | ExperimentKind::SupConvergence => {
                report.rows = rms_rows(&cfg.n_values, reps, |r| &r.primary);
                report.fit = try_fit(&report.rows);
                report.checks.push(decreasing_check(&report.rows));
                report.checks.push(slope_check(report.fit.as_ref()));
                if let (Some(theta), Some(fit)) = (report.theory.exponent, report.fit.as_ref()) {
                    let bound = theta + 3.0 * fit.stderr_slope;
                    report.checks.push(Check::new(
                        "rate_vs_theory",
                        fit.slope <= bound,
                        format!("slope {:.4} vs theoretical {theta:.4} + 3 * stderr = {bound:.4}", fit.slope),
                    ));
                }
            }
        }
        if cfg.keep_raw {
            let mut raw: Vec<RawReplication> = reps
                .iter()
                .map(|r| RawReplication {
                    stream: r.stream,
                    statistics: r.statistics.clone(),
                    reference: r.reference.clone(),
                })
                .collect();
            raw.sort_by_key(|r| r.stream);
            report.raw = Some(raw);
        }
        Ok(report)
    }

    fn assemble_holder(&self, reps: &[Replication], report: &mut Report) -> Result<()> {
        let cfg = self.cfg;
        let nm = cfg.n_max as f64;
        let lags: Vec<f64> = cfg.lags.iter().map(|&l| l as f64 / nm).collect();
        let base = 1.0 - cfg.hurst * (cfg.ell as f64 + 1.0);
        let mut curves = Vec::new();
        for p in [1u32, 2] {
            let mut moments = Vec::new();
            let mut stderrs = Vec::new();
            for j in 0..cfg.lags.len() {
                let powers: Vec<f64> = reps.iter().map(|r| r.primary[j].abs().powi(2 * p as i32)).collect();
                let (mean, se) = mean_and_stderr(powers);
                moments.push(mean);
                stderrs.push(se);
            }
            let fit = fit_power_law(&lags, &moments, &stderrs).ok();
            curves.push(MomentCurve {
                p,
                lags: lags.clone(),
                moments,
                stderrs,
                fit,
                theoretical_exponent: 2.0 * p as f64 * base,
            });
        }
        report.rows = cfg
            .lags
            .iter()
            .enumerate()
            .map(|(j, &lag)| {
                let m = curves[0].moments[j];
                let l2 = m.sqrt();
                ErrorRow {
                    n: lag,
                    l2_error: l2,
                    stderr: if l2 > 0.0 { curves[0].stderrs[j] / (2.0 * l2) } else { 0.0 },
                    replications: reps.len(),
                }
            })
            .collect();
        report.fit = curves[0].fit;
        for c in &curves {
            let need = c.theoretical_exponent - HOLDER_SLACK;
            let (passed, detail) = match &c.fit {
                Some(f) => (
                    f.slope >= need,
                    format!(
                        "p = {}: fitted exponent {:.4} (stderr {:.4}) vs {:.4} - {HOLDER_SLACK} = {need:.4}",
                        c.p, f.slope, f.stderr_slope, c.theoretical_exponent
                    ),
                ),
                None => (false, format!("p = {}: no fit (zero moments)", c.p)),
            };
            report.checks.push(Check::new(&format!("holder_exponent_p{}", c.p), passed, detail));
        }
        report.holder = Some(HolderDetail { epsilon: self.eps, curves });
        Ok(())
    }

    fn theory(&self) -> Theory {
        let cfg = self.cfg;
        let a = cfg.a();
        match cfg.kind {
            ExperimentKind::Lln => {
                let k = kappa_star(cfg.hurst, cfg.ell, 1.0);
                Theory {
                    exponent: k.map(|k| -(2.0 * a * k).min(k)),
                    kappa_star: k,
                    statement: "L2 error of the normalized statistic is O(n^-((2 a kappa) ^ kappa)) for admissible kappa".to_string(),
                }
            }
            ExperimentKind::SecondOrder => {
                let k = kappa_star(cfg.hurst, cfg.ell, 3.0);
                Theory {
                    exponent: k.map(|k| -2.0 * a * k),
                    kappa_star: k,
                    statement: "second-order residual is O(n^(-2 a kappa)) for admissible kappa".to_string(),
                }
            }
            ExperimentKind::SupConvergence => Theory {
                exponent: None,
                kappa_star: None,
                statement: format!("supremum over the time grid tends to 0 in probability; {}", sup_regime(cfg)),
            },
            ExperimentKind::Holder => Theory {
                exponent: Some(2.0 * (1.0 - cfg.hurst * (cfg.ell as f64 + 1.0))),
                kappa_star: None,
                statement: "E|L_v - L_u|^(2p) <= C |v - u|^(2p (1 - H(l+1)))".to_string(),
            },
        }
    }
}

/// Mean of `values` and its standard error. Values are sorted first, so the
/// result does not depend on their order.
fn mean_and_stderr(mut values: Vec<f64>) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    let m = values.len() as f64;
    let mean = pairwise_sum(&values) / m;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let var = pairwise_sum(&dev) / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Root mean square per row with a delta-method standard error.
fn rms_rows(n_values: &[usize], reps: &[Replication], pick: impl Fn(&Replication) -> &Vec<f64>) -> Vec<ErrorRow> {
    n_values
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let squares: Vec<f64> = reps.iter().map(|r| pick(r)[j].powi(2)).collect();
            let (ms, se) = mean_and_stderr(squares);
            let rms = ms.sqrt();
            ErrorRow {
                n,
                l2_error: rms,
                stderr: if rms > 0.0 { se / (2.0 * rms) } else { 0.0 },
                replications: reps.len(),
            }
        })
        .collect()
}

fn try_fit(rows: &[ErrorRow]) -> Option<RateFit> {
    let n: Vec<usize> = rows.iter().map(|r| r.n).collect();
    let e: Vec<f64> = rows.iter().map(|r| r.l2_error).collect();
    let s: Vec<f64> = rows.iter().map(|r| r.stderr).collect();
    fit_rate(&n, &e, &s).ok()
}

/// Each step down must exceed two combined standard errors.
fn decreasing_check(rows: &[ErrorRow]) -> Check {
    let mut bad = Vec::new();
    for w in rows.windows(2) {
        let margin = 2.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
        if !(w[0].l2_error - w[1].l2_error > margin) {
            bad.push(w[1].n);
        }
    }
    Check::new(
        "decreasing",
        bad.is_empty(),
        if bad.is_empty() {
            "every step decreases by more than 2 combined standard errors".to_string()
        } else {
            format!("no significant decrease into n = {bad:?}")
        },
    )
}

fn slope_check(fit: Option<&RateFit>) -> Check {
    match fit {
        Some(f) => Check::new(
            "slope_negative",
            f.slope < 0.0,
            format!("slope {:.4} +- {:.4}, R^2 {:.3}", f.slope, f.stderr_slope, f.r_squared),
        ),
        None => Check::new("slope_negative", false, "no fit: some errors are zero"),
    }
}
