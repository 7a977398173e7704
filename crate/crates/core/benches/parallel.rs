//! Sequential against rayon execution for the three batch-heavy paths:
//! Monte Carlo replications, the 2-D second-moment quadrature and a
//! Fourier-route estimate.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use dltlab::fbm::{simulate, Hurst, Method, TimeGrid};
use dltlab::harness::{run_experiment_with, ExperimentConfig, ExperimentKind};
use dltlab::kernel::Kernel;
use dltlab::local_time::{fourier_dlt, FourierOptions, StatisticSpec};
use dltlab::oracles::{dlt_second_moment, MomentQuery, OracleOptions};
use dltlab::par::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn experiment(c: &mut Criterion) {
    let mut cfg = ExperimentConfig::new(ExperimentKind::Lln, 0.3, 0, Kernel::gaussian(1.0).unwrap());
    cfg.n_values = vec![64, 128, 256];
    cfg.n_max = 1024;
    cfg.replications = 64;
    let mut g = c.benchmark_group("lln_experiment");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| run_experiment_with(black_box(&cfg), exec).unwrap())
        });
    }
    g.finish();
}

fn second_moment(c: &mut Criterion) {
    let q = MomentQuery::new(1, Hurst::new(0.2).unwrap(), 1.0, 0.01).unwrap();
    let mut g = c.benchmark_group("second_moment_oracle");
    g.sample_size(10);
    for (name, exec) in MODES {
        let opts = OracleOptions::default().exec(exec);
        g.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, opts| {
            b.iter(|| dlt_second_moment(black_box(&q), opts).unwrap())
        });
    }
    g.finish();
}

fn fourier(c: &mut Criterion) {
    let path = simulate(TimeGrid::unit(4096).unwrap(), Hurst::new(0.3).unwrap(), 1, Method::Circulant).unwrap();
    let spec = StatisticSpec::new(1, 0.3, 0.0, 1.0).unwrap();
    let opts = FourierOptions::for_epsilon(0.01).unwrap().damped(0.01).unwrap();
    let mut g = c.benchmark_group("fourier_estimate");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| fourier_dlt(black_box(&path), &spec, &opts, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, experiment, second_moment, fourier);
criterion_main!(benches);
