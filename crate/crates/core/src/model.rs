//! Fitted-model container shared by all estimators, with JSON persistence.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::smoothing::SplineBasis;

/// Current model file schema.
pub const SCHEMA_VERSION: u32 = 1;

/// Spline basis description stored with a model (enough to rebuild the basis
/// on the model's grid).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec<T> {
    pub degree: usize,
    /// Full clamped knot vector.
    pub knots: Vec<T>,
}

impl<T: Real> BasisSpec<T> {
    pub fn of(basis: &SplineBasis<T>) -> Self {
        Self {
            degree: basis.degree(),
            knots: basis.knots().to_vec(),
        }
    }

    /// Rebuild the basis, evaluated over `grid`.
    pub fn build(&self, grid: &[T]) -> Result<SplineBasis<T>> {
        SplineBasis::from_knot_vector(self.knots.clone(), self.degree, grid)
    }
}

/// Fit diagnostics that ride along with a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FitDiagnostics<T> {
    /// Per-component criterion values, one entry per alternating sweep
    /// (including the value at initialization). Non-increasing within each
    /// component.
    pub criterion_traces: Vec<Vec<T>>,
    /// Sweep counts per component.
    pub iterations: Vec<usize>,
    /// Cases whose final score adjustment was skipped (too few observed
    /// cells to identify all components); their sequential scores are kept.
    pub adjustment_skipped: Vec<usize>,
    /// Whether every iterative stage reported convergence.
    pub converged: bool,
}

/// A fitted functional principal component model.
///
/// Fitted values decompose as `x_ij ~ mu_j + sum_k scores[i,k] *
/// directions[j,k]`. When the directions live in a spline basis, `basis` and
/// `alpha` are present and `directions` equals the basis matrix times
/// `alpha` transposed, exactly as stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpcaModel<T> {
    pub schema_version: u32,
    /// Estimator that produced the model: `mm`, `naive`, or `classical`.
    pub estimator: String,
    /// Observation grid the model was fitted on.
    pub grid: Vec<T>,
    /// Center curve evaluated on the grid.
    pub mu: Array1<T>,
    /// Spline basis of the directions; absent for the classical estimator.
    pub basis: Option<BasisSpec<T>>,
    /// `q x m` spline coefficients of the directions; present iff `basis` is.
    pub alpha: Option<Array2<T>>,
    /// `p x q` principal directions evaluated on the grid.
    pub directions: Array2<T>,
    /// `n x q` per-case scores.
    pub scores: Array2<T>,
    /// Residual scale curves per fitting stage (sequential estimator only).
    pub sigma_stages: Vec<Vec<T>>,
    /// Unexplained-variation values `V_0..V_q`, non-increasing.
    pub variance_trace: Vec<T>,
    /// Proportion of explained variation `1 - V_q / V_0`, in `[0, 1]`.
    pub explained: T,
    pub case_ids: Vec<String>,
    pub diagnostics: FitDiagnostics<T>,
}

impl<T: Real> FpcaModel<T> {
    pub fn p(&self) -> usize {
        self.directions.nrows()
    }

    pub fn q(&self) -> usize {
        self.directions.ncols()
    }

    pub fn n(&self) -> usize {
        self.scores.nrows()
    }

    /// Reconstruction `mu + directions * scores` for one case.
    ///
    /// Accumulates one component at a time so that a training case's
    /// prediction is bitwise identical to its row of [`fitted_values`].
    ///
    /// [`fitted_values`]: Self::fitted_values
    pub fn predict(&self, case_scores: &[T]) -> Result<Array1<T>> {
        if case_scores.len() != self.q() {
            return Err(Error::ShapeMismatch {
                what: "predict",
                details: format!("{} scores for {} components", case_scores.len(), self.q()),
            });
        }
        let mut out = self.mu.clone();
        for (k, beta) in case_scores.iter().enumerate() {
            for (o, e) in out.iter_mut().zip(self.directions.column(k)) {
                *o += *beta * *e;
            }
        }
        Ok(out)
    }

    /// Fitted values for every training case, `n x p`.
    pub fn fitted_values(&self) -> Array2<T> {
        let mut fitted = Array2::zeros((self.n(), self.p()));
        for (i, mut row) in fitted.rows_mut().into_iter().enumerate() {
            let scores: Vec<T> = self.scores.row(i).to_vec();
            row.assign(&self.predict(&scores).expect("scores row has q entries"));
        }
        fitted
    }

    /// `1 - V_q / V_0` from the stored variance trace.
    pub fn explained_proportion(&self) -> Result<T> {
        let v0 = *self.variance_trace.first().ok_or(Error::EmptySample {
            what: "variance_trace",
        })?;
        let vq = *self.variance_trace.last().unwrap();
        if v0 <= T::zero() {
            return Err(Error::InvalidParameter {
                name: "variance_trace",
                reason: "total variation V_0 must be positive".to_string(),
            });
        }
        Ok((T::one() - vq / v0).max(T::zero()).min(T::one()))
    }

    /// Structural sanity checks: shapes, the spline representation of the
    /// directions, orthogonality, and monotonicity of the variance trace.
    pub fn validate(&self) -> Result<()> {
        let (p, q, n) = (self.p(), self.q(), self.n());
        if self.grid.len() != p || self.mu.len() != p || self.scores.ncols() != q {
            return Err(Error::ShapeMismatch {
                what: "model",
                details: format!(
                    "grid {}, mu {}, directions {p}x{q}, scores {n}x{}",
                    self.grid.len(),
                    self.mu.len(),
                    self.scores.ncols()
                ),
            });
        }
        if self.case_ids.len() != n {
            return Err(Error::ShapeMismatch {
                what: "model",
                details: format!("{} case ids for {n} score rows", self.case_ids.len()),
            });
        }
        if self.basis.is_some() != self.alpha.is_some() {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: "basis and alpha must be stored together".to_string(),
            });
        }
        if !(self.explained >= T::zero() && self.explained <= T::one()) {
            return Err(Error::InvalidParameter {
                name: "explained",
                reason: format!("{} outside [0, 1]", self.explained),
            });
        }
        for w in self.variance_trace.windows(2) {
            if w[1] > w[0] * (T::one() + T::of(1e-10)) + T::of(1e-12) {
                return Err(Error::InvalidParameter {
                    name: "variance_trace",
                    reason: format!("increases from {} to {}", w[0], w[1]),
                });
            }
        }

        // Directions must match their spline representation.
        if let (Some(spec), Some(alpha)) = (&self.basis, &self.alpha) {
            if alpha.nrows() != q {
                return Err(Error::ShapeMismatch {
                    what: "model",
                    details: format!("alpha has {} rows for {q} components", alpha.nrows()),
                });
            }
            let basis = spec.build(&self.grid)?;
            let rebuilt = basis.matrix().dot(&alpha.t());
            let scale = self
                .directions
                .iter()
                .fold(T::zero(), |a, v| a.max(v.abs()))
                .max(T::epsilon());
            for (a, b) in rebuilt.iter().zip(self.directions.iter()) {
                if (*a - *b).abs() > T::of(1e-10) * scale {
                    return Err(Error::InvalidParameter {
                        name: "directions",
                        reason: "directions do not match the stored spline coefficients"
                            .to_string(),
                    });
                }
            }
        }

        // Mutual orthogonality of the direction columns.
        let gram = self.directions.t().dot(&self.directions);
        let diag_scale = (0..q).fold(T::zero(), |a, k| a.max(gram[[k, k]].abs()));
        for k in 0..q {
            for l in 0..k {
                if gram[[k, l]].abs() > T::of(1e-8) * diag_scale {
                    return Err(Error::InvalidParameter {
                        name: "directions",
                        reason: format!(
                            "columns {l} and {k} are not orthogonal (inner product {})",
                            gram[[k, l]]
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

impl<T: Real + Serialize + DeserializeOwned> FpcaModel<T> {
    /// Persist as JSON. Finite floating-point values survive a round trip
    /// bit for bit, so reloaded models predict identically.
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let pstr = path.as_ref().display().to_string();
        let file = std::fs::File::create(path.as_ref()).map_err(|e| Error::io(&pstr, e))?;
        let mut writer = std::io::BufWriter::new(file);
        serde_json::to_writer_pretty(&mut writer, self).map_err(|e| Error::ModelFormat {
            path: pstr.clone(),
            source: e,
        })?;
        use std::io::Write;
        writer.flush().map_err(|e| Error::io(&pstr, e))?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let pstr = path.as_ref().display().to_string();
        let file = std::fs::File::open(path.as_ref()).map_err(|e| Error::io(&pstr, e))?;
        let model: Self = serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| {
            Error::ModelFormat {
                path: pstr.clone(),
                source: e,
            }
        })?;
        if model.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidParameter {
                name: "schema_version",
                reason: format!(
                    "{pstr} has schema {}, this build reads {SCHEMA_VERSION}",
                    model.schema_version
                ),
            });
        }
        model.validate()?;
        Ok(model)
    }
}
