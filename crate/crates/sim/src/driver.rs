//! Monte Carlo driver: sweeps outlier sizes over contamination settings,
//! decimation rates and estimators, and aggregates per-replication metrics
//! into reports and CSV files.
//!
//! # Determinism
//!
//! Every replication derives its seeds from the scenario's master seed via
//! [`derive_seed`], a splitmix64 counter keyed by a purpose tag. The same
//! replication index yields the same base sample in every report, so the
//! clean baseline, each contamination setting and every outlier size score
//! the same underlying draws (paired comparisons, smooth sweep curves).
//! Work items are scheduled onto worker threads through a shared counter,
//! but results land in preallocated slots keyed by (report, point,
//! replication), so the output is identical for any thread count.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use ndarray::Array2;
use robfpca::{fit_classical, fit_mm, fit_naive, ComponentCount, LongitudinalDataset, MmConfig};

use crate::contamination::{contaminate_case, contaminate_cell, CaseDirection, ContaminationSpec};
use crate::metrics::{mae, subspace_sin_angle, CellSelection};
use crate::scenario::{sample_realized, RealizedScenario, ScenarioConfig};
use crate::{Result, SimError};

/// The estimators the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    Classical,
    Naive,
    Mm,
}

impl Estimator {
    pub fn label(&self) -> &'static str {
        match self {
            Estimator::Classical => "classical",
            Estimator::Naive => "naive",
            Estimator::Mm => "mm",
        }
    }

    /// Only the MM estimator accepts incomplete data.
    pub fn supports_incomplete(&self) -> bool {
        matches!(self, Estimator::Mm)
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "classical" => Ok(Estimator::Classical),
            "naive" => Ok(Estimator::Naive),
            "mm" => Ok(Estimator::Mm),
            other => Err(format!(
                "unknown estimator `{other}` (expected classical, naive or mm)"
            )),
        }
    }
}

/// What [`run_monte_carlo`] sweeps.
#[derive(Debug, Clone)]
pub struct SweepSettings {
    pub estimators: Vec<Estimator>,
    /// Fractions of cells kept; `1.0` means complete data.
    pub decimation_rates: Vec<f64>,
    /// Casewise contamination fractions; one report per entry.
    pub eps_cases: Vec<f64>,
    /// Cellwise contamination probabilities; one report per entry.
    pub eps_cells: Vec<f64>,
    /// Outlier sizes swept in casewise reports.
    pub case_ks: Vec<f64>,
    /// Outlier sizes swept in cellwise reports.
    pub cell_ks: Vec<f64>,
    pub case_direction: CaseDirection,
    /// Configuration for the MM fits (the component count must match the
    /// scenario rank).
    pub mm_config: MmConfig<f64>,
    /// Worker threads; the output does not depend on this.
    pub threads: usize,
}

/// `len` equally spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![lo];
    }
    (0..len)
        .map(|i| lo + (hi - lo) * i as f64 / (len - 1) as f64)
        .collect()
}

impl SweepSettings {
    /// Defaults mirroring the complete-data experiments: all three
    /// estimators, 10% casewise and 2% cellwise contamination, eight-point
    /// outlier grids over [0.1, 3] (casewise) and [1, 7] (cellwise).
    pub fn complete_defaults(q: usize) -> Self {
        SweepSettings {
            estimators: vec![Estimator::Classical, Estimator::Naive, Estimator::Mm],
            decimation_rates: vec![1.0],
            eps_cases: vec![0.1],
            eps_cells: vec![0.02],
            case_ks: linspace(0.1, 3.0, 8),
            cell_ks: linspace(1.0, 7.0, 8),
            case_direction: CaseDirection::NextEigenvector,
            mm_config: MmConfig::new(q),
            threads: 1,
        }
    }

    /// Defaults mirroring the incomplete-data experiments: MM only,
    /// decimation rates 0.5 and 0.25, 10% casewise and 5% cellwise
    /// contamination, eight-point outlier grids over [1, 6].
    pub fn incomplete_defaults(q: usize) -> Self {
        SweepSettings {
            estimators: vec![Estimator::Mm],
            decimation_rates: vec![0.5, 0.25],
            eps_cases: vec![0.1],
            eps_cells: vec![0.05],
            case_ks: linspace(1.0, 6.0, 8),
            cell_ks: linspace(1.0, 6.0, 8),
            case_direction: CaseDirection::NextEigenvector,
            mm_config: MmConfig::new(q),
            threads: 1,
        }
    }

    fn validate(&self, scenario: &ScenarioConfig) -> Result<()> {
        if self.estimators.is_empty() {
            return Err(SimError::Invalid {
                name: "estimators",
                reason: "at least one estimator is required".into(),
            });
        }
        if self.decimation_rates.is_empty() {
            return Err(SimError::Invalid {
                name: "decimation_rates",
                reason: "at least one rate is required (1.0 means complete data)".into(),
            });
        }
        for &d in &self.decimation_rates {
            if !(d > 0.0 && d <= 1.0) {
                return Err(SimError::Invalid {
                    name: "decimation_rates",
                    reason: format!("{d} outside (0, 1]"),
                });
            }
        }
        for &eps in &self.eps_cases {
            if !(eps > 0.0 && eps < 0.5) {
                return Err(SimError::Invalid {
                    name: "eps_cases",
                    reason: format!("{eps} outside (0, 0.5)"),
                });
            }
        }
        for &eps in &self.eps_cells {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(SimError::Invalid {
                    name: "eps_cells",
                    reason: format!("{eps} outside (0, 1)"),
                });
            }
        }
        if !self.eps_cases.is_empty() && self.case_ks.is_empty() {
            return Err(SimError::Invalid {
                name: "case_ks",
                reason: "casewise settings need at least one outlier size".into(),
            });
        }
        if !self.eps_cells.is_empty() && self.cell_ks.is_empty() {
            return Err(SimError::Invalid {
                name: "cell_ks",
                reason: "cellwise settings need at least one outlier size".into(),
            });
        }
        for &k in self.case_ks.iter().chain(&self.cell_ks) {
            if !(k > 0.0) || !k.is_finite() {
                return Err(SimError::Invalid {
                    name: "outlier sizes",
                    reason: format!("{k} is not a positive size (0 is the clean baseline)"),
                });
            }
        }
        if self.threads == 0 {
            return Err(SimError::Invalid {
                name: "threads",
                reason: "at least one worker is required".into(),
            });
        }
        if self.estimators.contains(&Estimator::Mm) {
            match self.mm_config.components {
                ComponentCount::Fixed(q) if q == scenario.q => {}
                _ => {
                    return Err(SimError::Invalid {
                        name: "mm_config",
                        reason: format!(
                            "the harness compares against a rank-{} truth, so the MM \
                             component count must be fixed at {}",
                            scenario.q, scenario.q
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Metrics of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct RepMetrics {
    pub replication: usize,
    pub sample_seed: u64,
    pub mae: f64,
    pub sin_alpha: f64,
}

/// All replications at one outlier size, with their means.
#[derive(Debug, Clone, PartialEq)]
pub struct KPoint {
    pub k: f64,
    pub replications: Vec<RepMetrics>,
    pub mean_mae: f64,
    pub mean_sin: f64,
}

impl KPoint {
    fn from_reps(k: f64, replications: Vec<RepMetrics>) -> Self {
        let n = replications.len() as f64;
        let mean_mae = replications.iter().map(|r| r.mae).sum::<f64>() / n;
        let mean_sin = replications.iter().map(|r| r.sin_alpha).sum::<f64>() / n;
        KPoint {
            k,
            replications,
            mean_mae,
            mean_sin,
        }
    }
}

/// Results of one (estimator, contamination setting, decimation rate).
///
/// A report with `eps_case == eps_cell == 0` is a clean baseline: its
/// `clean` point holds the metrics and `sweep` is empty. Contaminated
/// reports embed a copy of their matching baseline so ratios are
/// self-contained. `clean == None` marks an estimator/decimation
/// combination that is not applicable (the complete-data estimators on
/// decimated data).
#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub scenario: String,
    pub estimator: Estimator,
    pub decimation: f64,
    pub eps_case: f64,
    pub eps_cell: f64,
    pub clean: Option<KPoint>,
    pub sweep: Vec<KPoint>,
}

impl EvaluationReport {
    pub fn applicable(&self) -> bool {
        self.clean.is_some()
    }

    pub fn is_clean_baseline(&self) -> bool {
        self.eps_case == 0.0 && self.eps_cell == 0.0
    }

    /// Largest per-size mean error over the sweep.
    pub fn max_mean_mae(&self) -> Option<f64> {
        self.sweep.iter().map(|p| p.mean_mae).fold(None, |acc, v| {
            Some(acc.map_or(v, |a: f64| a.max(v)))
        })
    }

    /// Largest per-size mean angle over the sweep.
    pub fn max_mean_sin(&self) -> Option<f64> {
        self.sweep.iter().map(|p| p.mean_sin).fold(None, |acc, v| {
            Some(acc.map_or(v, |a: f64| a.max(v)))
        })
    }

    /// Worst-case error relative to the clean baseline.
    pub fn mae_ratio(&self) -> Option<f64> {
        match (&self.clean, self.max_mean_mae()) {
            (Some(clean), Some(max)) if clean.mean_mae > 0.0 => Some(max / clean.mean_mae),
            _ => None,
        }
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Replication-level seed derivation: a splitmix64 chain over the master
/// seed, a purpose tag and a counter.
///
/// The tag separates independent random streams ("sample", "decimate",
/// "cells", "carrier") so adding a stream never shifts another one, and
/// the counter is the replication index, so any replication can be
/// regenerated in isolation.
pub fn derive_seed(master: u64, purpose: &str, index: u64) -> u64 {
    let mut s = splitmix64(master);
    for &b in purpose.as_bytes() {
        s = splitmix64(s ^ u64::from(b));
    }
    splitmix64(s ^ index)
}

/// The contamination applied to one report.
#[derive(Debug, Clone, Copy)]
enum Setting {
    Clean,
    Case(f64),
    Cell(f64),
}

struct Job {
    report: usize,
    replication: usize,
    setting: Setting,
    k: f64,
}

struct Skeleton {
    estimator: Estimator,
    decimation: f64,
    setting: Setting,
    ks: Vec<f64>,
    /// Index of the clean baseline report for the same estimator and rate.
    baseline: usize,
    applicable: bool,
}

/// Run the full sweep described by `settings` on `scenario`.
///
/// Returns one report per (decimation rate, estimator, setting), in that
/// nesting order with the clean baseline first within each block. Settings
/// an estimator cannot run (complete-data estimators under decimation)
/// yield inapplicable marker reports.
pub fn run_monte_carlo(
    scenario: &ScenarioConfig,
    settings: &SweepSettings,
) -> Result<Vec<EvaluationReport>> {
    settings.validate(scenario)?;
    let realized = scenario.realize()?;
    let truth = realized.true_subspace(scenario.q);

    // Lay out every report up front so results have stable addresses.
    let mut skeletons: Vec<Skeleton> = Vec::new();
    for &d in &settings.decimation_rates {
        for &estimator in &settings.estimators {
            let applicable = d >= 1.0 || estimator.supports_incomplete();
            let baseline = skeletons.len();
            skeletons.push(Skeleton {
                estimator,
                decimation: d,
                setting: Setting::Clean,
                ks: vec![0.0],
                baseline,
                applicable,
            });
            for &eps in &settings.eps_cases {
                skeletons.push(Skeleton {
                    estimator,
                    decimation: d,
                    setting: Setting::Case(eps),
                    ks: settings.case_ks.clone(),
                    baseline,
                    applicable,
                });
            }
            for &eps in &settings.eps_cells {
                skeletons.push(Skeleton {
                    estimator,
                    decimation: d,
                    setting: Setting::Cell(eps),
                    ks: settings.cell_ks.clone(),
                    baseline,
                    applicable,
                });
            }
        }
    }

    let replications = scenario.replications;
    let mut jobs: Vec<Job> = Vec::new();
    let mut offsets: Vec<usize> = Vec::with_capacity(skeletons.len());
    for (r, sk) in skeletons.iter().enumerate() {
        offsets.push(jobs.len());
        if !sk.applicable {
            continue;
        }
        for &k in &sk.ks {
            for replication in 0..replications {
                jobs.push(Job {
                    report: r,
                    replication,
                    setting: sk.setting,
                    k,
                });
            }
        }
    }

    let run_job = |job: &Job| -> Result<RepMetrics> {
        let sk = &skeletons[job.report];
        evaluate_one(
            scenario,
            &realized,
            &truth,
            sk.estimator,
            &settings.mm_config,
            settings.case_direction,
            sk.decimation,
            job.setting,
            job.k,
            job.replication,
        )
    };

    let mut results: Vec<Option<Result<RepMetrics>>> = Vec::with_capacity(jobs.len());
    let threads = settings.threads.min(jobs.len().max(1));
    if threads <= 1 {
        for job in &jobs {
            results.push(Some(run_job(job)));
        }
    } else {
        let slots: Vec<Mutex<Option<Result<RepMetrics>>>> =
            (0..jobs.len()).map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..threads {
                scope.spawn(|| loop {
                    let idx = next.fetch_add(1, Ordering::Relaxed);
                    if idx >= jobs.len() {
                        break;
                    }
                    let outcome = run_job(&jobs[idx]);
                    *slots[idx].lock().expect("result slot") = Some(outcome);
                });
            }
        });
        for slot in slots {
            results.push(slot.into_inner().expect("result slot"));
        }
    }

    // Assemble in deterministic order; the first failure (by job index)
    // aborts.
    let mut points: Vec<Vec<KPoint>> = Vec::with_capacity(skeletons.len());
    for (r, sk) in skeletons.iter().enumerate() {
        let mut block: Vec<KPoint> = Vec::new();
        if sk.applicable {
            let mut cursor = offsets[r];
            for &k in &sk.ks {
                let mut reps = Vec::with_capacity(replications);
                for _ in 0..replications {
                    let outcome = results[cursor].take().expect("job result");
                    reps.push(outcome?);
                    cursor += 1;
                }
                block.push(KPoint::from_reps(k, reps));
            }
        }
        points.push(block);
    }

    let mut reports = Vec::with_capacity(skeletons.len());
    for (r, sk) in skeletons.iter().enumerate() {
        let (eps_case, eps_cell) = match sk.setting {
            Setting::Clean => (0.0, 0.0),
            Setting::Case(eps) => (eps, 0.0),
            Setting::Cell(eps) => (0.0, eps),
        };
        let (clean, sweep) = if !sk.applicable {
            (None, Vec::new())
        } else if matches!(sk.setting, Setting::Clean) {
            (Some(points[r][0].clone()), Vec::new())
        } else {
            (Some(points[sk.baseline][0].clone()), points[r].clone())
        };
        reports.push(EvaluationReport {
            scenario: scenario.name.clone(),
            estimator: sk.estimator,
            decimation: sk.decimation,
            eps_case,
            eps_cell,
            clean,
            sweep,
        });
    }
    Ok(reports)
}

#[allow(clippy::too_many_arguments)]
fn evaluate_one(
    scenario: &ScenarioConfig,
    realized: &RealizedScenario,
    truth: &Array2<f64>,
    estimator: Estimator,
    mm_config: &MmConfig<f64>,
    case_direction: CaseDirection,
    decimation: f64,
    setting: Setting,
    k: f64,
    replication: usize,
) -> Result<RepMetrics> {
    let master = scenario.seed;
    let rep = replication as u64;
    let sample_seed = derive_seed(master, "sample", rep);
    let complete = sample_realized(scenario, realized, sample_seed)?;
    let reference = complete.values().clone();

    let observed = if decimation < 1.0 {
        complete.decimate(decimation, derive_seed(master, "decimate", rep))?
    } else {
        complete
    };

    let (eps_case, eps_cell) = match setting {
        Setting::Clean => (0.0, 0.0),
        Setting::Case(eps) => (eps, 0.0),
        Setting::Cell(eps) => (0.0, eps),
    };
    let run_error = |source: robfpca::Error| SimError::Run {
        estimator: estimator.label(),
        decimation,
        eps_case,
        eps_cell,
        k,
        replication,
        source,
    };

    let spec = ContaminationSpec {
        eps_case,
        eps_cell,
        k,
        case_direction,
    };
    let (data, clean_rows): (LongitudinalDataset<f64>, Option<Vec<usize>>) = match setting {
        Setting::Clean => (observed, None),
        Setting::Case(_) => {
            let (contaminated, untouched) = contaminate_case(
                &observed,
                &spec,
                realized,
                scenario.q,
                derive_seed(master, "carrier", rep),
            )?;
            (contaminated, Some(untouched))
        }
        Setting::Cell(_) => (
            contaminate_cell(
                &observed,
                &spec,
                &realized.sigma_diag,
                derive_seed(master, "cells", rep),
            )?,
            None,
        ),
    };

    let model = match estimator {
        Estimator::Classical => fit_classical(&data, scenario.q).map_err(run_error)?,
        Estimator::Naive => fit_naive(&data, scenario.q).map_err(run_error)?,
        Estimator::Mm => fit_mm(&data, mm_config).map_err(run_error)?,
    };
    let fitted = model.fitted_values();
    let mae = mae(
        &reference,
        &fitted,
        clean_rows.as_deref(),
        CellSelection::All,
    )?;
    let sin_alpha = subspace_sin_angle(&model.directions, truth)?;
    Ok(RepMetrics {
        replication,
        sample_seed,
        mae,
        sin_alpha,
    })
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// One row of the raw CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub scenario: String,
    pub estimator: Estimator,
    pub decimation: f64,
    pub eps_case: f64,
    pub eps_cell: f64,
    pub k: f64,
    pub replication: usize,
    pub sample_seed: u64,
    pub mae: f64,
    pub sin_alpha: f64,
}

const RAW_HEADER: [&str; 10] = [
    "scenario",
    "estimator",
    "decimation",
    "eps_case",
    "eps_cell",
    "k",
    "replication",
    "sample_seed",
    "mae",
    "sin_alpha",
];

/// Write one row per replication: the clean baselines at `k = 0` and every
/// sweep point of every applicable report.
pub fn write_raw_csv(reports: &[EvaluationReport], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(RAW_HEADER)?;
    for report in reports {
        let rows: Vec<(&KPoint, f64)> = if report.is_clean_baseline() {
            report.clean.iter().map(|p| (p, 0.0)).collect()
        } else {
            report.sweep.iter().map(|p| (p, p.k)).collect()
        };
        for (point, k) in rows {
            for rep in &point.replications {
                w.write_record([
                    report.scenario.as_str(),
                    report.estimator.label(),
                    &fmt_f64(report.decimation),
                    &fmt_f64(report.eps_case),
                    &fmt_f64(report.eps_cell),
                    &fmt_f64(k),
                    &rep.replication.to_string(),
                    &rep.sample_seed.to_string(),
                    &fmt_f64(rep.mae),
                    &fmt_f64(rep.sin_alpha),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Write one row per report: clean metrics, worst-case sweep metrics and
/// the worst-to-clean error ratio. Inapplicable combinations carry `NA`.
pub fn write_aggregated_csv(reports: &[EvaluationReport], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record([
        "scenario",
        "estimator",
        "decimation",
        "eps_case",
        "eps_cell",
        "clean_mae",
        "clean_sin",
        "max_mae",
        "max_sin",
        "mae_ratio",
    ])?;
    for report in reports {
        let opt = |v: Option<f64>| v.map_or_else(String::new, fmt_f64);
        let (clean_mae, clean_sin, max_mae, max_sin, ratio) = match &report.clean {
            None => {
                let na = || "NA".to_string();
                (na(), na(), na(), na(), na())
            }
            Some(clean) => (
                fmt_f64(clean.mean_mae),
                fmt_f64(clean.mean_sin),
                opt(report.max_mean_mae()),
                opt(report.max_mean_sin()),
                opt(report.mae_ratio()),
            ),
        };
        w.write_record([
            report.scenario.as_str(),
            report.estimator.label(),
            &fmt_f64(report.decimation),
            &fmt_f64(report.eps_case),
            &fmt_f64(report.eps_cell),
            &clean_mae,
            &clean_sin,
            &max_mae,
            &max_sin,
            &ratio,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Write plot-ready long-format curves: one row per (report, metric,
/// outlier size), with the clean baseline included as the `k = 0` point of
/// every contaminated report.
pub fn write_curves_csv(reports: &[EvaluationReport], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record([
        "scenario",
        "estimator",
        "decimation",
        "eps_case",
        "eps_cell",
        "metric",
        "k",
        "value",
    ])?;
    for report in reports {
        if report.is_clean_baseline() || !report.applicable() {
            continue;
        }
        let mut write_point = |metric: &str, k: f64, value: f64| -> Result<()> {
            w.write_record([
                report.scenario.as_str(),
                report.estimator.label(),
                &fmt_f64(report.decimation),
                &fmt_f64(report.eps_case),
                &fmt_f64(report.eps_cell),
                metric,
                &fmt_f64(k),
                &fmt_f64(value),
            ])?;
            Ok(())
        };
        for metric in ["mae", "sin_alpha"] {
            if let Some(clean) = &report.clean {
                let value = match metric {
                    "mae" => clean.mean_mae,
                    _ => clean.mean_sin,
                };
                write_point(metric, 0.0, value)?;
            }
            for point in &report.sweep {
                let value = match metric {
                    "mae" => point.mean_mae,
                    _ => point.mean_sin,
                };
                write_point(metric, point.k, value)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Parse a raw CSV produced by [`write_raw_csv`].
pub fn read_raw_csv(path: impl AsRef<Path>) -> Result<Vec<RawRecord>> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let mut reader = csv::Reader::from_path(path)?;
    {
        let headers = reader.headers()?;
        let got: Vec<&str> = headers.iter().collect();
        if got != RAW_HEADER {
            return Err(SimError::Format {
                path: display,
                reason: format!("unexpected header {got:?}"),
            });
        }
    }
    let mut records = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let row = row?;
        let line = idx + 2;
        let field = |pos: usize| -> Result<&str> {
            row.get(pos).ok_or_else(|| SimError::Format {
                path: display.clone(),
                reason: format!("line {line}: missing column {}", RAW_HEADER[pos]),
            })
        };
        fn parse<T: FromStr>(path: &str, line: usize, name: &str, raw: &str) -> Result<T> {
            raw.parse().map_err(|_| SimError::Format {
                path: path.to_string(),
                reason: format!("line {line}: cannot parse {name} from `{raw}`"),
            })
        }
        records.push(RawRecord {
            scenario: field(0)?.to_string(),
            estimator: parse(&display, line, "estimator", field(1)?)?,
            decimation: parse(&display, line, "decimation", field(2)?)?,
            eps_case: parse(&display, line, "eps_case", field(3)?)?,
            eps_cell: parse(&display, line, "eps_cell", field(4)?)?,
            k: parse(&display, line, "k", field(5)?)?,
            replication: parse(&display, line, "replication", field(6)?)?,
            sample_seed: parse(&display, line, "sample_seed", field(7)?)?,
            mae: parse(&display, line, "mae", field(8)?)?,
            sin_alpha: parse(&display, line, "sin_alpha", field(9)?)?,
        });
    }
    Ok(records)
}

/// Rebuild reports from raw records (inverse of [`write_raw_csv`] up to
/// inapplicable markers, which the raw file does not carry).
///
/// Groups appear in first-appearance order, as do outlier sizes within a
/// group, so a round trip through the raw CSV reproduces the curves file
/// byte for byte.
pub fn reports_from_raw(records: &[RawRecord]) -> Vec<EvaluationReport> {
    struct Group {
        scenario: String,
        estimator: Estimator,
        decimation: f64,
        eps_case: f64,
        eps_cell: f64,
        ks: Vec<f64>,
        reps: Vec<Vec<RepMetrics>>,
    }
    let mut groups: Vec<Group> = Vec::new();
    for r in records {
        let gi = groups
            .iter()
            .position(|g| {
                g.scenario == r.scenario
                    && g.estimator == r.estimator
                    && g.decimation == r.decimation
                    && g.eps_case == r.eps_case
                    && g.eps_cell == r.eps_cell
            })
            .unwrap_or_else(|| {
                groups.push(Group {
                    scenario: r.scenario.clone(),
                    estimator: r.estimator,
                    decimation: r.decimation,
                    eps_case: r.eps_case,
                    eps_cell: r.eps_cell,
                    ks: Vec::new(),
                    reps: Vec::new(),
                });
                groups.len() - 1
            });
        let group = &mut groups[gi];
        let ki = group.ks.iter().position(|&k| k == r.k).unwrap_or_else(|| {
            group.ks.push(r.k);
            group.reps.push(Vec::new());
            group.ks.len() - 1
        });
        group.reps[ki].push(RepMetrics {
            replication: r.replication,
            sample_seed: r.sample_seed,
            mae: r.mae,
            sin_alpha: r.sin_alpha,
        });
    }

    let baselines: Vec<Option<KPoint>> = groups
        .iter()
        .map(|g| {
            if g.eps_case == 0.0 && g.eps_cell == 0.0 && !g.ks.is_empty() {
                Some(KPoint::from_reps(g.ks[0], g.reps[0].clone()))
            } else {
                None
            }
        })
        .collect();
    let find_baseline = |g: &Group| -> Option<KPoint> {
        groups
            .iter()
            .zip(&baselines)
            .find(|(b, point)| {
                point.is_some()
                    && b.scenario == g.scenario
                    && b.estimator == g.estimator
                    && b.decimation == g.decimation
            })
            .and_then(|(_, point)| point.clone())
    };

    groups
        .iter()
        .map(|g| {
            let is_clean = g.eps_case == 0.0 && g.eps_cell == 0.0;
            let (clean, sweep) = if is_clean {
                (
                    Some(KPoint::from_reps(g.ks[0], g.reps[0].clone())),
                    Vec::new(),
                )
            } else {
                let sweep = g
                    .ks
                    .iter()
                    .zip(&g.reps)
                    .map(|(&k, reps)| KPoint::from_reps(k, reps.clone()))
                    .collect();
                (find_baseline(g), sweep)
            };
            EvaluationReport {
                scenario: g.scenario.clone(),
                estimator: g.estimator,
                decimation: g.decimation,
                eps_case: g.eps_case,
                eps_cell: g.eps_cell,
                clean,
                sweep,
            }
        })
        .collect()
}
