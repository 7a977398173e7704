use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{cov_unchecked, Hurst, TimeGrid};
use crate::error::{Error, Result};
use crate::rng::{StreamId, GENERATOR_NAME};

/// Largest node count accepted by the dense Cholesky route.
pub const CHOLESKY_MAX_NODES: usize = 6_000;
/// Largest node count accepted by the circulant route.
pub const CIRCULANT_MAX_NODES: usize = 1 << 26;

/// Relative threshold below which negative circulant eigenvalues abort.
const EIGEN_NEGATIVE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Dense Cholesky factor of the covariance of `(X_{t_1}, ..., X_{t_m})`.
    Cholesky,
    /// Circulant embedding of the fractional Gaussian noise autocovariance,
    /// followed by cumulative summation.
    Circulant,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Cholesky => "cholesky",
            Method::Circulant => "circulant",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cholesky" => Ok(Method::Cholesky),
            "circulant" => Ok(Method::Circulant),
            other => Err(Error::domain(format!("unknown simulation method `{other}`"))),
        }
    }
}

/// A sampled trajectory on a uniform grid. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbmPath {
    hurst: Hurst,
    grid: TimeGrid,
    values: Vec<f64>,
    seed: u64,
    stream: u64,
    method: Method,
    generator: String,
}

impl FbmPath {
    /// Assembles a path from stored values, e.g. when reading a file or
    /// building a synthetic test trajectory.
    pub fn from_parts(hurst: Hurst, grid: TimeGrid, values: Vec<f64>, seed: u64, stream: u64, method: Method) -> Result<Self> {
        Self::with_generator(hurst, grid, values, StreamId::new(seed, stream), method, GENERATOR_NAME.to_string())
    }

    pub(crate) fn with_generator(
        hurst: Hurst,
        grid: TimeGrid,
        values: Vec<f64>,
        id: StreamId,
        method: Method,
        generator: String,
    ) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::domain(format!(
                "path has {} values but the grid has {} nodes",
                values.len(),
                grid.node_count()
            )));
        }
        if values[0] != 0.0 {
            return Err(Error::domain(format!("path must start at 0, got {}", values[0])));
        }
        Ok(Self {
            hurst,
            grid,
            values,
            seed: id.seed,
            stream: id.stream,
            method,
            generator,
        })
    }

    pub fn hurst(&self) -> Hurst {
        self.hurst
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn generator(&self) -> &str {
        &self.generator
    }
}

/// Samples a path using stream 0 of `seed`.
pub fn simulate(grid: TimeGrid, hurst: Hurst, seed: u64, method: Method) -> Result<FbmPath> {
    simulate_stream(grid, hurst, StreamId::new(seed, 0), method)
}

/// Samples a path from an explicit random stream.
pub fn simulate_stream(grid: TimeGrid, hurst: Hurst, id: StreamId, method: Method) -> Result<FbmPath> {
    let m = grid.last_index();
    let mut rng = id.rng();
    let mut values = Vec::with_capacity(m + 1);
    values.push(0.0);
    match method {
        Method::Cholesky => values.extend(cholesky_sample(&grid, hurst, &mut rng)?),
        Method::Circulant => {
            let noise = circulant_noise(m, grid.step(), hurst, &mut rng)?;
            let mut acc = 0.0;
            for dx in noise {
                acc += dx;
                values.push(acc);
            }
        }
    }
    FbmPath::with_generator(hurst, grid, values, id, method, GENERATOR_NAME.to_string())
}

fn cholesky_sample<R: Rng>(grid: &TimeGrid, hurst: Hurst, rng: &mut R) -> Result<Vec<f64>> {
    let m = grid.last_index();
    if m > CHOLESKY_MAX_NODES {
        return Err(Error::Resource(format!(
            "cholesky simulation of {m} nodes exceeds the limit of {CHOLESKY_MAX_NODES}; use the circulant method"
        )));
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    let mut cov = DMatrix::from_fn(m, m, |i, j| cov_unchecked(grid.time(i + 1), grid.time(j + 1), hurst));
    let factor = match cov.clone().cholesky() {
        Some(c) => c,
        None => {
            let jitter = 1e-12 * cov.trace() / m as f64;
            for i in 0..m {
                cov[(i, i)] += jitter;
            }
            cov.cholesky()
                .ok_or_else(|| Error::numerical(format!("covariance of {m} nodes is not positive definite after jitter {jitter:e}")))?
        }
    };
    let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let l = factor.l();
    let mut out = vec![0.0; m];
    for i in 0..m {
        let mut acc = 0.0;
        for j in 0..=i {
            acc += l[(i, j)] * z[j];
        }
        out[i] = acc;
    }
    Ok(out)
}

/// Autocovariance of unit-spacing fractional Gaussian noise at lag `k`.
fn fgn_autocov(k: usize, two_h: f64) -> f64 {
    let k = k as f64;
    0.5 * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h))
}

/// `m` increments of the process on a grid of spacing `dt`.
fn circulant_noise<R: Rng>(m: usize, dt: f64, hurst: Hurst, rng: &mut R) -> Result<Vec<f64>> {
    if m == 0 {
        return Ok(Vec::new());
    }
    if m > CIRCULANT_MAX_NODES {
        return Err(Error::Resource(format!(
            "circulant simulation of {m} increments exceeds the limit of {CIRCULANT_MAX_NODES}"
        )));
    }
    let two_h = hurst.two_h();
    let half = m.next_power_of_two();
    let size = 2 * half;
    let mut row: Vec<Complex64> = Vec::with_capacity(size);
    for k in 0..=half {
        row.push(Complex64::new(fgn_autocov(k, two_h), 0.0));
    }
    for k in (1..half).rev() {
        row.push(Complex64::new(fgn_autocov(k, two_h), 0.0));
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(size);
    fft.process(&mut row);

    let max_eig = row.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
    let min_eig = row.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
    if min_eig < -EIGEN_NEGATIVE_TOL * max_eig {
        return Err(Error::CirculantEmbedding {
            min_eigenvalue: min_eig,
            max_eigenvalue: max_eig,
        });
    }

    let scale = dt.powf(two_h);
    let mut w: Vec<Complex64> = row
        .iter()
        .map(|lambda| {
            let amp = (lambda.re.max(0.0) / size as f64).sqrt();
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(amp * re, amp * im)
        })
        .collect();
    fft.process(&mut w);
    let sd = scale.sqrt();
    Ok(w.iter().take(m).map(|c| c.re * sd).collect())
}

/// Restriction of `path` to every `factor`-th node.
pub fn subsample(path: &FbmPath, factor: usize) -> Result<FbmPath> {
    let n = path.grid.n();
    if factor == 0 || !n.is_multiple_of(factor) {
        return Err(Error::domain(format!("subsampling factor {factor} does not divide n = {n}")));
    }
    let grid = TimeGrid::new(n / factor, path.grid.horizon())?;
    let values: Vec<f64> = path.values.iter().step_by(factor).take(grid.node_count()).copied().collect();
    FbmPath::with_generator(
        path.hurst,
        grid,
        values,
        StreamId::new(path.seed, path.stream),
        path.method,
        path.generator.clone(),
    )
}
