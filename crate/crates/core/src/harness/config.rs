use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::{Hurst, Method};
use crate::kernel::Kernel;

/// Admissible `kappa` values are searched on this grid.
pub const KAPPA_GRID_STEP: f64 = 1e-3;
/// Memory budget used when a config does not set one.
pub const DEFAULT_MEMORY_BUDGET_MB: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Lln,
    SecondOrder,
    SupConvergence,
    Holder,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Lln => "lln",
            ExperimentKind::SecondOrder => "second_order",
            ExperimentKind::SupConvergence => "sup_convergence",
            ExperimentKind::Holder => "holder",
        }
    }
}

/// Width of the reference mollifier: `eps = c_eps * n_max^{-2H}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonRule {
    pub c_eps: f64,
}

impl Default for EpsilonRule {
    fn default() -> Self {
        Self { c_eps: 1.0 }
    }
}

fn default_t() -> f64 {
    1.0
}

fn default_n_values() -> Vec<usize> {
    (7..=12).map(|k| 1usize << k).collect()
}

fn default_n_max() -> usize {
    1 << 14
}

fn default_replications() -> usize {
    500
}

fn default_method() -> Method {
    Method::Circulant
}

fn default_lags() -> Vec<usize> {
    (6..=12).map(|k| 1usize << k).collect()
}

fn default_memory() -> usize {
    DEFAULT_MEMORY_BUDGET_MB
}

/// A declarative Monte Carlo experiment. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub hurst: f64,
    pub ell: usize,
    /// Scaling exponent; defaults to `hurst`.
    #[serde(default)]
    pub a: Option<f64>,
    pub kernel: Kernel,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_t")]
    pub t: f64,
    /// Times for `sup_convergence`; defaults to `t/4, t/2, 3t/4, t`.
    #[serde(default)]
    pub t_grid: Option<Vec<f64>>,
    #[serde(default = "default_n_values")]
    pub n_values: Vec<usize>,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub epsilon_rule: EpsilonRule,
    #[serde(default = "default_method")]
    pub method: Method,
    /// Time lags for `holder`, in steps of the finest grid.
    #[serde(default = "default_lags")]
    pub lags: Vec<usize>,
    /// Keep every replication's raw statistics in the report.
    #[serde(default)]
    pub keep_raw: bool,
    #[serde(default = "default_memory")]
    pub memory_budget_mb: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// A config with the harness defaults for everything but the essentials.
    pub fn new(kind: ExperimentKind, hurst: f64, ell: usize, kernel: Kernel) -> Self {
        Self {
            kind,
            hurst,
            ell,
            a: None,
            kernel,
            lambda: 0.0,
            t: default_t(),
            t_grid: None,
            n_values: default_n_values(),
            n_max: default_n_max(),
            replications: default_replications(),
            seed: 0,
            epsilon_rule: EpsilonRule::default(),
            method: default_method(),
            lags: default_lags(),
            keep_raw: false,
            memory_budget_mb: default_memory(),
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn a(&self) -> f64 {
        self.a.unwrap_or(self.hurst)
    }

    pub fn hurst(&self) -> Result<Hurst> {
        Hurst::new(self.hurst).map_err(|e| Error::config(e.to_string()))
    }

    pub fn reference_epsilon(&self) -> f64 {
        self.epsilon_rule.c_eps * (self.n_max as f64).powf(-2.0 * self.hurst)
    }

    pub fn times(&self) -> Vec<f64> {
        match (&self.t_grid, self.kind) {
            (Some(g), _) => g.clone(),
            (None, ExperimentKind::SupConvergence) => (1..=4).map(|k| self.t * k as f64 / 4.0).collect(),
            (None, _) => vec![self.t],
        }
    }

    /// Largest time the experiment touches.
    pub fn horizon(&self) -> f64 {
        self.times().into_iter().fold(self.t, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        self.hurst()?;
        let a = self.a();
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::config(format!("scaling exponent a must be positive, got {a}")));
        }
        if !self.lambda.is_finite() {
            return Err(Error::config("lambda must be finite"));
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(Error::config(format!("t must be positive, got {}", self.t)));
        }
        if let Some(g) = &self.t_grid {
            if g.is_empty() || g.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
                return Err(Error::config("t_grid must hold positive times"));
            }
            if g.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::config("t_grid must be strictly increasing"));
            }
        }
        if !(self.epsilon_rule.c_eps > 0.0 && self.epsilon_rule.c_eps.is_finite()) {
            return Err(Error::config(format!("c_eps must be positive, got {}", self.epsilon_rule.c_eps)));
        }
        if self.n_max == 0 {
            return Err(Error::config("n_max must be positive"));
        }
        if self.replications < 2 {
            return Err(Error::config(format!("need at least 2 replications, got {}", self.replications)));
        }
        if self.kind == ExperimentKind::Holder {
            if self.lags.len() < 3 {
                return Err(Error::config("holder needs at least 3 lags"));
            }
            if self.lags.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::config("lags must be strictly increasing"));
            }
            let span = crate::fbm::TimeGrid::new(self.n_max, self.t)?.last_index();
            if let Some(&bad) = self.lags.iter().find(|&&l| l == 0 || l > span) {
                return Err(Error::config(format!("lag {bad} is outside 1..={span} finest-grid steps")));
            }
        } else {
            if self.n_values.len() < 3 {
                return Err(Error::config(format!(
                    "n_values needs at least 3 entries to fit a rate, got {}",
                    self.n_values.len()
                )));
            }
            if self.n_values.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::config("n_values must be strictly increasing"));
            }
            if let Some(&bad) = self.n_values.iter().find(|&&n| n == 0 || !self.n_max.is_multiple_of(n)) {
                return Err(Error::config(format!("n = {bad} does not divide n_max = {}", self.n_max)));
            }
            for w in self.n_values.windows(2) {
                if w[1] % w[0] != 0 {
                    return Err(Error::config(format!(
                        "n = {} does not divide n = {}; n_values must be nested",
                        w[0], w[1]
                    )));
                }
            }
        }
        let order = match self.kind {
            ExperimentKind::Holder => None,
            _ => Some(self.ell),
        };
        if let Some(ell) = order {
            self.kernel.check_order(ell).map_err(|e| Error::config(e.to_string()))?;
        }
        Ok(())
    }

    /// Bytes held at once: one finest path plus FFT workspace per worker.
    pub fn memory_estimate(&self, threads: usize) -> usize {
        let nodes = (self.n_max as f64 * self.horizon()).ceil() as usize + 1;
        let per_path = match self.method {
            Method::Circulant => nodes * 8 + 4 * nodes.next_power_of_two() * 16,
            Method::Cholesky => nodes * 8 + nodes * nodes * 8,
        };
        per_path * threads.max(1)
    }

    pub fn check_resources(&self, threads: usize) -> Result<()> {
        let need = self.memory_estimate(threads);
        let budget = self.memory_budget_mb.saturating_mul(1 << 20);
        if need > budget {
            return Err(Error::Resource(format!(
                "experiment needs about {} MiB with {threads} workers, budget is {} MiB",
                need >> 20,
                self.memory_budget_mb
            )));
        }
        Ok(())
    }
}

/// Largest `kappa` on the 1e-3 grid inside `(0, 1/2)` with
/// `H (2l + 2 kappa + offset) < 1`.
pub fn kappa_star(hurst: f64, ell: usize, offset: f64) -> Option<f64> {
    let steps = (0.5 / KAPPA_GRID_STEP).round() as usize;
    (1..steps)
        .rev()
        .map(|k| k as f64 * KAPPA_GRID_STEP)
        .find(|&kappa| hurst * (2.0 * ell as f64 + 2.0 * kappa + offset) < 1.0)
}

/// Theorem hypotheses violated by `cfg`. Violations do not stop a run.
pub fn hypothesis_warnings(cfg: &ExperimentConfig) -> Vec<String> {
    let h = cfg.hurst;
    let l = cfg.ell as f64;
    let mut out = Vec::new();
    if cfg.a() > h {
        out.push(format!("a = {} exceeds H = {h}; the limit theorems assume a <= H", cfg.a()));
    }
    match cfg.kind {
        ExperimentKind::Lln | ExperimentKind::SupConvergence => {
            if h * (2.0 * l + 1.0) >= 1.0 {
                out.push(format!("H(2l+1) = {} >= 1: L^({}) does not exist", h * (2.0 * l + 1.0), cfg.ell));
            } else if kappa_star(h, cfg.ell, 1.0).is_none() {
                out.push("no kappa in (0, 1/2) satisfies H(2l+2kappa+1) < 1 on the 1e-3 grid".to_string());
            }
            if cfg.kind == ExperimentKind::SupConvergence && cfg.ell >= 1 && h * (2.0 * l + 2.0) >= 1.0 {
                out.push(format!(
                    "H(2l+2) = {} >= 1: uniform convergence is only established on [T1, T2] with T1 > 0",
                    h * (2.0 * l + 2.0)
                ));
            }
        }
        ExperimentKind::SecondOrder => {
            if h * (2.0 * l + 3.0) >= 1.0 {
                out.push(format!("H(2l+3) = {} >= 1: outside the second-order theorem", h * (2.0 * l + 3.0)));
            } else if kappa_star(h, cfg.ell, 3.0).is_none() {
                out.push("no kappa in (0, 1/2) satisfies H(2l+2kappa+3) < 1 on the 1e-3 grid".to_string());
            }
        }
        ExperimentKind::Holder => {
            if h * (2.0 * l + 1.0) >= 1.0 {
                out.push(format!("H(2l+1) = {} >= 1: L^({}) does not exist", h * (2.0 * l + 1.0), cfg.ell));
            }
        }
    }
    out
}

/// Hypothesis regime of a `sup_convergence` run.
pub fn sup_regime(cfg: &ExperimentConfig) -> &'static str {
    let h = cfg.hurst;
    let l = cfg.ell as f64;
    if cfg.ell == 0 {
        "l = 0: uniform on [0, T]"
    } else if h * (2.0 * l + 2.0) < 1.0 {
        "H < 1/(2l+2): uniform on [0, T]"
    } else if h * (2.0 * l + 1.0) < 1.0 {
        "1/(2l+2) <= H < 1/(2l+1): uniform on [T1, T2], T1 > 0"
    } else {
        "H >= 1/(2l+1): outside the theorem"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ExperimentConfig {
        ExperimentConfig::new(ExperimentKind::Lln, 0.25, 1, Kernel::Bump)
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_json(r#"{"kind": "lln", "hurst": 0.3, "ell": 0, "kernel": "gaussian(eps=1)"}"#).unwrap();
        assert_eq!(cfg.n_values, vec![128, 256, 512, 1024, 2048, 4096]);
        assert_eq!(cfg.n_max, 16384);
        assert_eq!(cfg.replications, 500);
        assert_eq!(cfg.a(), 0.3);
        assert_eq!(cfg.epsilon_rule.c_eps, 1.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = ExperimentConfig::from_json(r#"{"kind": "lln", "hurst": 0.3, "ell": 0, "kernel": "bump", "n_maxx": 4}"#).unwrap_err();
        assert!(matches!(e, Error::Config(ref m) if m.contains("n_maxx")), "{e}");
    }

    #[test]
    fn non_dividing_n_named() {
        let mut cfg = base();
        cfg.n_values = vec![128, 256, 384];
        let e = cfg.validate().unwrap_err();
        assert!(e.to_string().contains("n = 384"), "{e}");
    }

    #[test]
    fn capability_is_config_error() {
        let mut cfg = base();
        cfg.ell = 3;
        cfg.kernel = Kernel::BumpDeriv;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn kappa_star_examples() {
        // H(2 + 2k + 1) < 1 at H = 1/4 holds for all k < 1/2
        assert_eq!(kappa_star(0.25, 1, 1.0), Some(0.499));
        // 0.3 (1 + 2k) < 1 iff k < 7/6 - 1/2
        assert_eq!(kappa_star(0.3, 0, 1.0), Some(0.499));
        let k = kappa_star(0.3, 1, 1.0).unwrap();
        assert!((k - 0.166).abs() < 1e-12, "{k}");
        assert_eq!(kappa_star(0.4, 1, 1.0), None);
    }

    #[test]
    fn warnings_do_not_fail() {
        let mut cfg = base();
        cfg.a = Some(0.5);
        cfg.hurst = 0.4;
        assert!(cfg.validate().is_ok());
        let w = hypothesis_warnings(&cfg);
        assert_eq!(w.len(), 2, "{w:?}");
    }

    #[test]
    fn resource_check() {
        let mut cfg = base();
        cfg.n_max = 1 << 26;
        cfg.n_values = vec![1 << 20, 1 << 21, 1 << 22];
        assert!(matches!(cfg.check_resources(8), Err(Error::Resource(_))));
        assert!(base().check_resources(8).is_ok());
    }

    #[test]
    fn json_round_trip() {
        let mut cfg = base();
        cfg.t_grid = Some(vec![0.5, 1.0]);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }
}
