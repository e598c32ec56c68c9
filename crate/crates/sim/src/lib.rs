//! Monte Carlo harness for the robust functional principal component
//! estimators.
//!
//! The crate generates longitudinal samples from a low-rank Gaussian model
//! on a common grid, injects casewise (whole-curve) or cellwise (single
//! measurement) outliers, optionally decimates the observations, runs the
//! estimators from the `robfpca` crate over a sweep of outlier sizes, and
//! reports prediction errors and subspace angles in raw, aggregated and
//! plot-ready CSV form.
//!
//! Everything is driven by a single master seed: replication-level seeds
//! are derived with a documented splittable counter scheme, so a run is
//! reproducible bit for bit regardless of how many worker threads execute
//! it.
//!
//! The harness works in `f64`: simulation studies gain nothing from the
//! core crate's scalar genericity, and fixing the scalar keeps seeds,
//! metrics and CSV round trips exact.

pub mod contamination;
pub mod driver;
pub mod metrics;
pub mod scenario;

pub use contamination::{contaminate_case, contaminate_cell, CaseDirection, ContaminationSpec};
pub use driver::{
    derive_seed, linspace, read_raw_csv, reports_from_raw, run_monte_carlo, write_aggregated_csv,
    write_curves_csv, write_raw_csv, Estimator, EvaluationReport, KPoint, RawRecord, RepMetrics,
    SweepSettings,
};
pub use metrics::{mae, row_maes, subspace_sin_angle, CellSelection};
pub use scenario::{generate_sample, lrs_like, macs_like, RealizedScenario, ScenarioConfig};

/// Errors raised by the harness, either its own validation or an estimator
/// failure bubbling up with run coordinates attached.
#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Core(#[from] robfpca::Error),
    #[error("invalid {name}: {reason}")]
    Invalid { name: &'static str, reason: String },
    #[error("empty averaging set: {what}")]
    EmptyAverage { what: &'static str },
    #[error("{estimator} failed at d={decimation}, eps_case={eps_case}, eps_cell={eps_cell}, K={k}, replication {replication}: {source}")]
    Run {
        estimator: &'static str,
        decimation: f64,
        eps_case: f64,
        eps_cell: f64,
        k: f64,
        replication: usize,
        source: robfpca::Error,
    },
    #[error("CSV output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("raw report file {path}: {reason}")]
    Format { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, SimError>;
