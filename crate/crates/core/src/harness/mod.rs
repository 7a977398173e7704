//! Declarative Monte Carlo experiments: configuration, execution, rate
//! fitting and report emission.

mod config;
mod experiment;
mod fit;
mod report;

pub use config::{
    hypothesis_warnings, kappa_star, sup_regime, EpsilonRule, ExperimentConfig, ExperimentKind, DEFAULT_MEMORY_BUDGET_MB, KAPPA_GRID_STEP,
};
pub use experiment::{run_experiment, run_experiment_with, run_on_streams, AUX_STREAM_OFFSET, HOLDER_SLACK, MAX_QUARANTINE_FRACTION};
pub use fit::{fit_power_law, fit_rate, RateFit};
pub use report::{
    emit, sidecar_path, Check, ErrorRow, Format, HolderDetail, MomentCurve, RawReplication, Report, SecondOrderDetail, Theory, Timing,
    CSV_HEADER, REPORT_SCHEMA,
};
