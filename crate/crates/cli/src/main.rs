//! `dltlab` command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage, domain and configuration errors,
//! 2 for numerical failures (quadrature accuracy, circulant embedding, too
//! many non-finite replications, failed audits).

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use dltlab::audit::{fbm_identities, hermite_identities};
use dltlab::error::{Error, Result};
use dltlab::fbm::{read_path, simulate_stream, write_path, Hurst, Method, PathEncoding, TimeGrid};
use dltlab::harness::{emit, run_experiment_with, ExperimentConfig, Format};
use dltlab::kernel::{compute_moments, Kernel, DEFAULT_KAPPAS};
use dltlab::local_time::{dlt_profile, fourier_dlt, g_statistic, mollified_dlt, DltEstimate, FourierOptions, StatisticSpec};
use dltlab::oracles::{
    covariance_bound_audit, default_eps_schedule, divergence_probe, dlt_first_moment, dlt_second_moment, gaussian_pair_moment, MomentQuery,
    OracleOptions,
};
use dltlab::par::{with_threads, Exec};
use dltlab::rng::{StreamId, GENERATOR_NAME};

#[derive(Debug, Parser)]
#[command(
    name = "dltlab",
    version,
    about = "Derivatives of fractional Brownian local time: simulation, estimators, oracles and experiments"
)]
struct Cli {
    /// Master seed (overrides the seed in an experiment config)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel loops
    #[arg(long, global = true, env = "DLTLAB_THREADS")]
    threads: Option<usize>,
    /// Output file; stdout when absent
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Json)]
    format: OutFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one fBm path and write it to --out (.csv or binary)
    Simulate(SimulateArgs),
    /// Kernel moment table
    Moments(MomentsArgs),
    /// Single-path estimators, one JSON record per estimate
    Estimate(EstimateArgs),
    /// Simulation-free moment and threshold queries
    Oracle(OracleArgs),
    /// Run a Monte Carlo experiment from a JSON config
    Experiment(ExperimentArgs),
    /// Covariance-bound audit and identity suites
    Audit(AuditArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Circulant,
    Cholesky,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Circulant => Method::Circulant,
            MethodArg::Cholesky => Method::Cholesky,
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    hurst: f64,
    /// Grid intervals per unit time
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Circulant)]
    method: MethodArg,
    /// Random stream index under the master seed
    #[arg(long, default_value_t = 0)]
    stream: u64,
}

#[derive(Debug, Args)]
struct MomentsArgs {
    /// Kernel names, e.g. `gaussian(eps=1)` or `bump`
    #[arg(long = "kernel", required = true)]
    kernels: Vec<String>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_KAPPAS.to_vec())]
    kappas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0usize])]
    ells: Vec<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RouteArg {
    Discrete,
    Mollified,
    Fourier,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Path file written by `simulate`
    #[arg(long)]
    path: PathBuf,
    #[arg(long, value_enum)]
    route: RouteArg,
    #[arg(long, default_value_t = 0)]
    ell: usize,
    /// Levels; one record per level
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0], allow_hyphen_values = true)]
    lambda: Vec<f64>,
    /// Time horizon of the estimate; the path horizon when absent
    #[arg(long)]
    t: Option<f64>,
    /// Kernel for the discrete route
    #[arg(long)]
    kernel: Option<String>,
    /// Scaling exponent for the discrete route; the path's Hurst index when absent
    #[arg(long)]
    a: Option<f64>,
    /// Report the unnormalized sum
    #[arg(long)]
    raw: bool,
    /// Mollifier variance (mollified route, and default Fourier cutoff)
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    xi_cutoff: Option<f64>,
    #[arg(long)]
    xi_step: Option<f64>,
    /// Gaussian damping variance for the Fourier route
    #[arg(long)]
    damping: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OracleKind {
    First,
    Second,
    Divergence,
    Pair,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long, value_enum)]
    kind: OracleKind,
    #[arg(long, default_value_t = 0)]
    ell: usize,
    #[arg(long)]
    hurst: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    #[arg(long)]
    eps: Option<f64>,
    /// Second width for cross moments
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    lambda: f64,
    /// Decreasing widths for the divergence probe
    #[arg(long, value_delimiter = ',')]
    schedule: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1e-8)]
    rel_tol: f64,
    #[arg(long)]
    m11: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    m12: Option<f64>,
    #[arg(long)]
    m22: Option<f64>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.2, 0.5, 0.8])]
    hursts: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match with_threads(cli.threads, || run(&cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a),
        Command::Moments(a) => moments(cli, a),
        Command::Estimate(a) => estimate(cli, a),
        Command::Oracle(a) => oracle(cli, a),
        Command::Experiment(a) => experiment(cli, a),
        Command::Audit(a) => audit(cli, a),
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            std::fs::write(path, text).map_err(|e| Error::io(path, e))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("library types serialize")
}

fn hurst_arg(h: Option<f64>) -> Result<Hurst> {
    Hurst::new(h.ok_or_else(|| Error::config("--hurst is required"))?)
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<ExitCode> {
    let out = cli.out.as_deref().ok_or_else(|| Error::config("simulate needs --out"))?;
    let hurst = Hurst::new(a.hurst)?;
    let grid = TimeGrid::new(a.n, a.horizon)?;
    let seed = cli.seed.unwrap_or(0);
    let path = simulate_stream(grid, hurst, StreamId::new(seed, a.stream), a.method.into())?;
    let encoding = match cli.format {
        OutFormat::Csv => PathEncoding::Csv,
        OutFormat::Json => PathEncoding::from_path(out),
    };
    write_path(&path, out, encoding)?;
    let summary = json!({
        "file": out,
        "encoding": if encoding == PathEncoding::Csv { "csv" } else { "binary" },
        "hurst": a.hurst,
        "n": a.n,
        "horizon": a.horizon,
        "nodes": path.values().len(),
        "method": path.method().name(),
        "generator": GENERATOR_NAME,
        "seed": seed,
        "stream": a.stream,
    });
    write_output(None, &pretty(&summary))?;
    Ok(ExitCode::SUCCESS)
}

fn moments(cli: &Cli, a: &MomentsArgs) -> Result<ExitCode> {
    let mut rows = Vec::new();
    for name in &a.kernels {
        let k: Kernel = name.parse()?;
        rows.push(compute_moments(&k, &a.kappas, &a.ells)?);
    }
    let text = match cli.format {
        OutFormat::Json => pretty(&to_value(&rows)),
        OutFormat::Csv => {
            let mut s = String::from("kernel,mu,mu_tilde,zero_energy,achieved_tolerance\n");
            for m in &rows {
                s.push_str(&format!(
                    "\"{}\",{:e},{:e},{},{:e}\n",
                    m.kernel, m.mu, m.mu_tilde, m.zero_energy, m.achieved_tolerance
                ));
            }
            s
        }
    };
    write_output(cli.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn estimate(cli: &Cli, a: &EstimateArgs) -> Result<ExitCode> {
    if cli.format != OutFormat::Json {
        return Err(Error::config("estimate writes JSON records only"));
    }
    let path = read_path(&a.path)?;
    let t = a.t.unwrap_or(path.grid().horizon());
    let scale = a.a.unwrap_or(path.hurst().value());
    let need_eps = || a.eps.ok_or_else(|| Error::config("--eps is required for this route"));
    let records: Vec<DltEstimate> = match a.route {
        RouteArg::Discrete => {
            let kernel: Kernel = a
                .kernel
                .as_deref()
                .ok_or_else(|| Error::config("--kernel is required for the discrete route"))?
                .parse()?;
            a.lambda
                .iter()
                .map(|&l| g_statistic(&path, &kernel, &StatisticSpec::new(a.ell, scale, l, t)?, !a.raw))
                .collect::<Result<_>>()?
        }
        RouteArg::Mollified => {
            let eps = need_eps()?;
            if a.lambda.len() > 1 {
                dlt_profile(&path, a.ell, eps, &a.lambda, t, Exec::Parallel)?
            } else {
                vec![mollified_dlt(&path, &StatisticSpec::new(a.ell, scale, a.lambda[0], t)?, eps)?]
            }
        }
        RouteArg::Fourier => {
            let mut opts = match (a.xi_cutoff, a.xi_step) {
                (Some(c), Some(s)) => FourierOptions::new(c, s)?,
                (None, None) => FourierOptions::for_epsilon(need_eps()?)?,
                _ => return Err(Error::config("give both --xi-cutoff and --xi-step, or neither")),
            };
            if let Some(d) = a.damping {
                opts = opts.damped(d)?;
            }
            a.lambda
                .iter()
                .map(|&l| fourier_dlt(&path, &StatisticSpec::new(a.ell, scale, l, t)?, &opts, Exec::Parallel))
                .collect::<Result<_>>()?
        }
    };
    let mut text = String::new();
    for r in &records {
        text.push_str(&serde_json::to_string(r).expect("estimates serialize"));
        text.push('\n');
    }
    write_output(cli.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn oracle(cli: &Cli, a: &OracleArgs) -> Result<ExitCode> {
    if cli.format != OutFormat::Json {
        return Err(Error::config("oracle writes JSON only"));
    }
    let opts = OracleOptions::default().with_rel_tol(a.rel_tol);
    let record = match a.kind {
        OracleKind::Pair => {
            let need = |v: Option<f64>, name: &str| v.ok_or_else(|| Error::config(format!("--{name} is required for pair moments")));
            let (m11, m12, m22) = (need(a.m11, "m11")?, need(a.m12, "m12")?, need(a.m22, "m22")?);
            let value = gaussian_pair_moment(a.ell, m11, m12, m22)?;
            json!({"kind": "pair", "ell": a.ell, "m11": m11, "m12": m12, "m22": m22, "value": value})
        }
        OracleKind::First | OracleKind::Second => {
            let eps = a.eps.ok_or_else(|| Error::config("--eps is required for moment queries"))?;
            let mut q = MomentQuery::new(a.ell, hurst_arg(a.hurst)?, a.t, eps)?.with_lambda(a.lambda);
            if let Some(eta) = a.eta {
                q = q.with_eta(eta);
            }
            let (kind, v) = if a.kind == OracleKind::First {
                ("first", dlt_first_moment(&q, &opts)?)
            } else {
                ("second", dlt_second_moment(&q, &opts)?)
            };
            let mut rec = json!({"kind": kind, "query": to_value(&q)});
            if let (Value::Object(m), Value::Object(v)) = (&mut rec, to_value(&v)) {
                m.extend(v);
            }
            rec
        }
        OracleKind::Divergence => {
            let schedule = a.schedule.clone().unwrap_or_else(default_eps_schedule);
            let r = divergence_probe(a.ell, hurst_arg(a.hurst)?, a.t, &schedule, &opts)?;
            let mut rec = json!({"kind": "divergence"});
            if let (Value::Object(m), Value::Object(v)) = (&mut rec, to_value(&r)) {
                m.extend(v);
            }
            rec
        }
    };
    write_output(cli.out.as_deref(), &pretty(&record))?;
    Ok(ExitCode::SUCCESS)
}

fn experiment(cli: &Cli, a: &ExperimentArgs) -> Result<ExitCode> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let report = run_experiment_with(&cfg, Exec::Parallel)?;
    let format = match cli.format {
        OutFormat::Json => Format::Json,
        OutFormat::Csv => Format::Csv,
    };
    match cli.out.clone().or_else(|| cfg.output.clone()) {
        Some(path) => {
            let written = emit(&report, format, &path)?;
            for w in written {
                eprintln!("wrote {}", w.display());
            }
        }
        None if format == Format::Json => write_output(None, &format!("{}\n", report.to_json()?))?,
        None => return Err(Error::config("csv output needs --out (the metadata goes to a sidecar file)")),
    }
    for c in report.checks.iter().filter(|c| !c.passed) {
        eprintln!("check {} failed: {}", c.name, c.detail);
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(ExitCode::SUCCESS)
}

fn audit(cli: &Cli, a: &AuditArgs) -> Result<ExitCode> {
    if cli.format != OutFormat::Json {
        return Err(Error::config("audit writes JSON only"));
    }
    let seed = cli.seed.unwrap_or(0);
    let bound = covariance_bound_audit(a.samples, &a.hursts, a.horizon, seed)?;
    let fbm = fbm_identities(a.samples, seed)?;
    let hermite = hermite_identities()?;
    let passed = bound.passes() && fbm.iter().chain(&hermite).all(|c| c.passed);
    let record = json!({
        "passed": passed,
        "covariance_bound": to_value(&bound),
        "covariance_bound_passed": bound.passes(),
        "fbm_identities": to_value(&fbm),
        "hermite_identities": to_value(&hermite),
    });
    write_output(cli.out.as_deref(), &pretty(&record))?;
    if passed {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("audit: at least one check failed");
        Ok(ExitCode::from(2))
    }
}
