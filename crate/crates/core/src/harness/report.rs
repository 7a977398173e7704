use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::fit::RateFit;
use crate::error::{Error, Result};
use crate::rng::RngProvenance;

pub const REPORT_SCHEMA: &str = "dltlab-report/1";
pub const CSV_HEADER: &str = "n,l2_error,stderr,replications";

/// One point of the error curve. For `holder` reports `n` is the time lag
/// in finest-grid steps and `l2_error` is the L2 norm of the increment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub n: usize,
    pub l2_error: f64,
    pub stderr: f64,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Rate exponent implied by the theorem behind the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theory {
    pub exponent: Option<f64>,
    pub kappa_star: Option<f64>,
    pub statement: String,
}

/// Residuals `n^a (stat - mu L^(l)) + sign * mu~ L^(l+1)` for both signs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderDetail {
    pub mu: f64,
    pub mu_tilde: f64,
    /// `+1` or `-1`, whichever gives the smaller residual at the finest `n`.
    pub selected_sign: i8,
    pub rows_plus: Vec<ErrorRow>,
    pub rows_minus: Vec<ErrorRow>,
    pub fit_plus: Option<RateFit>,
    pub fit_minus: Option<RateFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCurve {
    pub p: u32,
    pub lags: Vec<f64>,
    pub moments: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub fit: Option<RateFit>,
    /// `2p (1 - H(l+1))`.
    pub theoretical_exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderDetail {
    pub epsilon: f64,
    pub curves: Vec<MomentCurve>,
}

/// Raw statistics of one replication, kept when `keep_raw` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawReplication {
    pub stream: u64,
    /// Unnormalized statistics `G`, one per `n` (per `(n, t)` for sup runs).
    pub statistics: Vec<f64>,
    pub reference: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_clock_seconds: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub config: ExperimentConfig,
    pub reference_epsilon: f64,
    pub rows: Vec<ErrorRow>,
    pub fit: Option<RateFit>,
    pub theory: Theory,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    pub quarantined: usize,
    #[serde(default)]
    pub second_order: Option<SecondOrderDetail>,
    #[serde(default)]
    pub holder: Option<HolderDetail>,
    #[serde(default)]
    pub raw: Option<Vec<RawReplication>>,
    pub provenance: RngProvenance,
    pub timing: Timing,
}

impl Report {
    /// Copy with timing fields cleared, for replay comparisons.
    pub fn without_timing(&self) -> Report {
        let mut r = self.clone();
        r.timing = Timing {
            wall_clock_seconds: 0.0,
            threads: 0,
        };
        r
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::numerical(format!("report is not serializable: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Report> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("report: {e}")))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{},{:e},{:e},{}", r.n, r.l2_error, r.stderr, r.replications);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(Error::config(format!("unknown format `{other}`, expected json or csv"))),
        }
    }
}

/// Sidecar metadata path for a CSV report: `x.csv` -> `x.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `report` to `path`; CSV also writes the full report as a sidecar.
/// Returns the files written.
pub fn emit(report: &Report, format: Format, path: &Path) -> Result<Vec<PathBuf>> {
    match format {
        Format::Json => {
            write(path, &report.to_json()?)?;
            Ok(vec![path.to_path_buf()])
        }
        Format::Csv => {
            write(path, &report.to_csv())?;
            let meta = sidecar_path(path);
            write(&meta, &report.to_json()?)?;
            Ok(vec![path.to_path_buf(), meta])
        }
    }
}
