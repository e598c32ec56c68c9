//! Sequential robust functional principal components for data with missing
//! cells.
//!
//! Components are extracted one at a time. Each component minimizes a
//! bounded-loss criterion over a spline-constrained direction, per-case
//! scores, and a center update, by alternating closed-form weighted updates.
//! Initial values come from a pairwise robust covariance (direction) and L1
//! regressions (scores), residuals are deflated between stages, and a final
//! pass re-estimates all scores jointly against the orthonormalized
//! directions.

use ndarray::{Array1, Array2};

use crate::data::LongitudinalDataset;
use crate::error::{Error, Result};
use crate::kernels::{
    bisquare_regression_m, gk_covariance, l1_regression, m_location, median, tau_scale,
    Dispersion, LossFamily,
};
use crate::linalg::orthonormalize_columns;
use crate::model::{BasisSpec, FitDiagnostics, FpcaModel, SCHEMA_VERSION};
use crate::scalar::Real;
use crate::smoothing::{
    loess_2d, make_basis, robust_loess_1d_at, smooth_with_basis, LoessConfig, SplineBasis,
};

/// Bisquare tuning constant of the fitting criterion.
pub const CRITERION_TUNING: f64 = 3.44;
/// Bisquare tuning constant of the final score adjustment.
pub const SCORE_ADJUSTMENT_TUNING: f64 = 4.0;
/// Scale curves are floored at this multiple of the median raw column scale.
pub const SCALE_FLOOR_FACTOR: f64 = 1e-3;

/// How many components to extract.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ComponentCount<T> {
    /// Exactly this many components.
    Fixed(usize),
    /// Keep adding components until the explained proportion reaches the
    /// target (capped by the spline basis size).
    TargetExplained(T),
}

/// Configuration of [`fit_mm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmConfig<T> {
    pub components: ComponentCount<T>,
    /// Interior spline knots are placed every `knot_divisor` grid points.
    pub knot_divisor: usize,
    /// Loss of the fitting criterion. The quadratic loss reduces the whole
    /// procedure (including the score adjustment) to unweighted least
    /// squares, which reproduces classical principal components on complete
    /// data whose directions lie in the spline span.
    pub loss: LossFamily<T>,
    /// Maximum alternating sweeps per component.
    pub max_outer_iterations: usize,
    /// Relative criterion decrease below which a component has converged.
    pub tolerance: T,
    /// Minimum pairwise overlap for using the raw covariance in the
    /// direction initializer; below it the covariance matrix is completed
    /// and smoothed first.
    pub overlap_threshold: usize,
    /// Re-estimate all scores jointly after the sequential fit.
    pub final_adjustment: bool,
    /// Local regression used for the center and scale curves.
    pub loess: LoessConfig<T>,
}

impl<T: Real> MmConfig<T> {
    /// Defaults with a fixed number of components.
    pub fn new(q: usize) -> Self {
        Self {
            components: ComponentCount::Fixed(q),
            ..Self::default()
        }
    }

    /// Defaults, stopping when `target` of the variation is explained.
    pub fn with_target_explained(target: T) -> Self {
        Self {
            components: ComponentCount::TargetExplained(target),
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        match self.components {
            ComponentCount::Fixed(q) if q == 0 => {
                return Err(Error::InvalidParameter {
                    name: "components",
                    reason: "at least one component is required".to_string(),
                });
            }
            ComponentCount::TargetExplained(u) if !(u > T::zero() && u < T::one()) => {
                return Err(Error::InvalidParameter {
                    name: "components",
                    reason: format!("target explained proportion {u} outside (0, 1)"),
                });
            }
            _ => {}
        }
        if self.knot_divisor == 0 {
            return Err(Error::InvalidParameter {
                name: "knot_divisor",
                reason: "must be at least 1".to_string(),
            });
        }
        if self.max_outer_iterations == 0 {
            return Err(Error::InvalidParameter {
                name: "max_outer_iterations",
                reason: "must be at least 1".to_string(),
            });
        }
        if !(self.tolerance > T::zero()) || !self.tolerance.is_finite() {
            return Err(Error::InvalidParameter {
                name: "tolerance",
                reason: format!("{} is not a positive number", self.tolerance),
            });
        }
        if self.overlap_threshold < 3 {
            return Err(Error::InvalidParameter {
                name: "overlap_threshold",
                reason: "pairwise covariances need at least 3 overlapping cases".to_string(),
            });
        }
        Ok(())
    }
}

impl<T: Real> Default for MmConfig<T> {
    fn default() -> Self {
        Self {
            components: ComponentCount::Fixed(2),
            knot_divisor: crate::smoothing::DEFAULT_KNOT_DIVISOR,
            loss: LossFamily::bisquare(T::of(CRITERION_TUNING)).expect("valid tuning"),
            max_outer_iterations: 50,
            tolerance: T::of(1e-6),
            overlap_threshold: 10,
            final_adjustment: true,
            loess: LoessConfig::default(),
        }
    }
}

/// Loss contribution of one cell: `sigma^2 rho(r / sigma)`, which for the
/// quadratic loss collapses to `r^2` (no scale dependence).
#[inline]
fn cell_loss<T: Real>(loss: &LossFamily<T>, r: T, sigma: T) -> T {
    match loss {
        LossFamily::Quadratic => r * r,
        _ => sigma * sigma * loss.rho(r / sigma),
    }
}

/// Mean loss over the observed cells:
/// `(1/N) sum_j sum_{i in I_j} sigma_j^2 rho(r_ij / sigma_j)`.
///
/// `N` is the number of observed cells. For the bisquare loss every scale
/// must be strictly positive; the quadratic loss ignores the scales.
pub fn unexplained_variance<T: Real>(
    residuals: &Array2<T>,
    mask: &Array2<bool>,
    scales: &Array1<T>,
    loss: &LossFamily<T>,
) -> Result<T> {
    let (n, p) = residuals.dim();
    if mask.dim() != (n, p) || scales.len() != p {
        return Err(Error::ShapeMismatch {
            what: "unexplained_variance",
            details: format!(
                "residuals {n}x{p}, mask {:?}, {} scales",
                mask.dim(),
                scales.len()
            ),
        });
    }
    if !loss.is_quadratic() && scales.iter().any(|s| !(*s > T::zero())) {
        return Err(Error::InvalidParameter {
            name: "scales",
            reason: "every column scale must be strictly positive".to_string(),
        });
    }
    let mut total = T::zero();
    let mut count = 0usize;
    for i in 0..n {
        for j in 0..p {
            if mask[[i, j]] {
                total += cell_loss(loss, residuals[[i, j]], scales[j]);
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptySample {
            what: "unexplained_variance",
        });
    }
    Ok(total / T::of(count as f64))
}

/// Robust center and scale curves of a dataset.
///
/// Column M-locations are smoothed over time into `mu0`; tau-scales of the
/// residuals around `mu0` are smoothed into `sigma0` and floored at
/// `1e-3` times the median raw column scale. Columns with fewer than two
/// observations contribute nothing to the smoothers and get their values
/// purely from them.
pub fn local_location_scale<T: Real>(
    data: &LongitudinalDataset<T>,
    loess: &LoessConfig<T>,
) -> Result<(Array1<T>, Array1<T>)> {
    let grid = data.grid();
    let p = data.p();

    let mut ts = Vec::new();
    let mut locations = Vec::new();
    let mut columns = Vec::new();
    for j in 0..p {
        let (_, values) = data.column_observed(j);
        if values.len() >= 2 {
            ts.push(grid[j]);
            locations.push(m_location(&values)?);
            columns.push(j);
        }
    }
    let mu0 = Array1::from(robust_loess_1d_at(&ts, &locations, loess, grid)?);

    let mut scales = Vec::with_capacity(columns.len());
    for &j in &columns {
        let (_, values) = data.column_observed(j);
        let centered: Vec<T> = values.iter().map(|v| *v - mu0[j]).collect();
        scales.push(tau_scale(&centered)?.value);
    }
    let sigma0 = smooth_scale_points(&ts, &scales, loess, grid)?;
    Ok((mu0, sigma0))
}

/// Smooth raw per-column scales into a positive curve (unless all scales are
/// zero, in which case the zero curve is returned and callers decide how to
/// treat the degeneracy).
fn smooth_scale_points<T: Real>(
    ts: &[T],
    scales: &[T],
    loess: &LoessConfig<T>,
    grid: &[T],
) -> Result<Array1<T>> {
    let floor = T::of(SCALE_FLOOR_FACTOR) * median(scales)?;
    if scales.iter().all(|s| *s == T::zero()) {
        return Ok(Array1::zeros(grid.len()));
    }
    let fitted = robust_loess_1d_at(ts, scales, loess, grid)?;
    Ok(Array1::from_iter(fitted.into_iter().map(|s| s.max(floor))))
}

/// Tau-scales of the current residuals, smoothed over the grid.
fn residual_scale_curve<T: Real>(
    grid: &[T],
    residuals: &Array2<T>,
    mask: &Array2<bool>,
    loess: &LoessConfig<T>,
) -> Result<Array1<T>> {
    let p = grid.len();
    let mut ts = Vec::new();
    let mut scales = Vec::new();
    for j in 0..p {
        let values: Vec<T> = (0..residuals.nrows())
            .filter(|&i| mask[[i, j]])
            .map(|i| residuals[[i, j]])
            .collect();
        if values.len() >= 2 {
            ts.push(grid[j]);
            scales.push(tau_scale(&values)?.value);
        }
    }
    smooth_scale_points(&ts, &scales, loess, grid)
}

/// Initial direction for the next component.
///
/// Builds the matrix of pairwise covariances of the residual columns from a
/// robust dispersion of sums and differences. Entries with fewer than 3
/// overlapping cases are left missing; if anything is missing or the
/// smallest overlap drops below `overlap_threshold`, the matrix is completed
/// and smoothed by a local plane fit. The leading eigenvector is
/// sign-normalized (largest absolute entry positive), projected onto the
/// spline basis, and scaled to unit norm.
///
/// Returns the direction evaluated on the grid and its basis coefficients.
pub fn init_direction<T: Real>(
    residuals: &Array2<T>,
    mask: &Array2<bool>,
    basis: &SplineBasis<T>,
    dispersion: Dispersion,
    overlap_threshold: usize,
) -> Result<(Array1<T>, Array1<T>)> {
    let (n, p) = residuals.dim();
    if basis.grid().len() != p {
        return Err(Error::ShapeMismatch {
            what: "init_direction",
            details: format!("residuals have {p} columns, basis grid {}", basis.grid().len()),
        });
    }

    let mut cov = Array2::<T>::zeros((p, p));
    let mut available = Array2::from_elem((p, p), false);
    let mut min_overlap = usize::MAX;
    for k in 0..p {
        for l in k..p {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for i in 0..n {
                if mask[[i, k]] && mask[[i, l]] {
                    xs.push(residuals[[i, k]]);
                    ys.push(residuals[[i, l]]);
                }
            }
            min_overlap = min_overlap.min(xs.len());
            let entry = if k == l {
                if xs.len() >= 3 {
                    let s = dispersion.apply(&xs)?;
                    Some(s * s)
                } else {
                    None
                }
            } else {
                gk_covariance(&xs, &ys, dispersion)?
            };
            if let Some(v) = entry {
                cov[[k, l]] = v;
                cov[[l, k]] = v;
                available[[k, l]] = true;
                available[[l, k]] = true;
            }
        }
    }

    let complete = available.iter().all(|a| *a);
    let cov = if complete && min_overlap >= overlap_threshold {
        cov
    } else {
        loess_2d(&cov, &available)?
    };

    let eigen = crate::linalg::sym_eigen(&cov)?;
    let mut leading: Array1<T> = eigen.vectors.column(0).to_owned();
    let mut arg_max = 0;
    for j in 1..p {
        if leading[j].abs() > leading[arg_max].abs() {
            arg_max = j;
        }
    }
    if leading[arg_max] < T::zero() {
        leading.mapv_inplace(|v| -v);
    }

    let (alpha, smoothed) = smooth_with_basis(basis, leading.as_slice().unwrap(), None)?;
    let norm = smoothed.iter().map(|v| *v * *v).sum::<T>().sqrt();
    if !(norm > T::zero()) {
        return Err(Error::DegenerateComponent {
            reason: "initial direction vanished after smoothing".to_string(),
        });
    }
    Ok((smoothed.mapv(|v| v / norm), alpha.mapv(|a| a / norm)))
}

/// Initial per-case scores: the L1 regression of each case's residuals on
/// the direction restricted to its observed cells. Cases on which the
/// direction vanishes identically get a zero score; a constant direction
/// makes the score the median of the case's residuals.
pub fn init_scores<T: Real>(
    residuals: &Array2<T>,
    mask: &Array2<bool>,
    direction: &Array1<T>,
) -> Result<Array1<T>> {
    let (n, p) = residuals.dim();
    if direction.len() != p {
        return Err(Error::ShapeMismatch {
            what: "init_scores",
            details: format!("direction of length {} for {p} columns", direction.len()),
        });
    }
    let mut beta = Array1::zeros(n);
    for i in 0..n {
        let cols: Vec<usize> = (0..p).filter(|&j| mask[[i, j]]).collect();
        if cols.iter().all(|&j| direction[j] == T::zero()) {
            continue;
        }
        let design = Array2::from_shape_fn((cols.len(), 1), |(r, _)| direction[cols[r]]);
        let ys: Vec<T> = cols.iter().map(|&j| residuals[[i, j]]).collect();
        beta[i] = l1_regression(&design, &ys)?[0];
    }
    Ok(beta)
}

/// One fitted component, before orthogonalization against earlier ones.
#[derive(Debug, Clone)]
pub struct ComponentFit<T> {
    /// Basis coefficients of the unit-norm direction.
    pub alpha: Array1<T>,
    /// Per-case scores.
    pub beta: Array1<T>,
    /// Center update accumulated during the sweeps.
    pub mu_update: Array1<T>,
    /// Criterion value at initialization and after every sweep;
    /// non-increasing.
    pub criterion_trace: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
}

/// Fit a single component by alternating closed-form updates.
///
/// Each sweep recomputes the weights `W(r_ij / sigma_j)` once, then updates
/// the center (weighted residual mean per column), the scores (weighted
/// univariate regression per case), and the direction coefficients (a
/// weighted normal-equation solve), in that order. Every update minimizes
/// the weighted quadratic majorizer of the criterion in its block, so the
/// criterion cannot increase; this is asserted after every sweep. Iteration
/// stops when the relative criterion decrease drops below the configured
/// tolerance or the sweep budget is exhausted. The returned direction has
/// unit Euclidean norm over the grid, with the scores rescaled to
/// compensate.
pub fn fit_component<T: Real>(
    residuals: &Array2<T>,
    mask: &Array2<bool>,
    scales: &Array1<T>,
    basis: &SplineBasis<T>,
    init_alpha: Array1<T>,
    init_beta: Array1<T>,
    config: &MmConfig<T>,
) -> Result<ComponentFit<T>> {
    let (n, p) = residuals.dim();
    let m = basis.len();
    let b = basis.matrix();
    if init_alpha.len() != m || init_beta.len() != n || scales.len() != p {
        return Err(Error::ShapeMismatch {
            what: "fit_component",
            details: format!(
                "{} coefficients for {m} basis functions, {} scores for {n} cases, {} scales",
                init_alpha.len(),
                init_beta.len(),
                scales.len()
            ),
        });
    }
    let loss = &config.loss;
    if !loss.is_quadratic() && scales.iter().any(|s| !(*s > T::zero())) {
        return Err(Error::InvalidParameter {
            name: "scales",
            reason: "every column scale must be strictly positive".to_string(),
        });
    }

    let mut alpha = init_alpha;
    let mut beta = init_beta;
    let mut mu = Array1::<T>::zeros(p);
    let mut h = b.dot(&alpha);
    let mut weights = Array2::<T>::zeros((n, p));

    let observed = mask.iter().filter(|m| **m).count();
    if observed == 0 {
        return Err(Error::EmptySample {
            what: "fit_component",
        });
    }
    let n_cells = T::of(observed as f64);

    let criterion = |mu: &Array1<T>, beta: &Array1<T>, h: &Array1<T>| -> T {
        let mut total = T::zero();
        for i in 0..n {
            for j in 0..p {
                if mask[[i, j]] {
                    let r = residuals[[i, j]] - mu[j] - beta[i] * h[j];
                    total += cell_loss(loss, r, scales[j]);
                }
            }
        }
        total / n_cells
    };

    let mut trace = vec![criterion(&mu, &beta, &h)];
    let mut converged = false;
    let mut iterations = 0;

    for sweep in 1..=config.max_outer_iterations {
        iterations = sweep;

        // Weights are held fixed for the whole sweep.
        for i in 0..n {
            for j in 0..p {
                weights[[i, j]] = if mask[[i, j]] {
                    let r = residuals[[i, j]] - mu[j] - beta[i] * h[j];
                    loss.weight(r / scales[j].max(T::epsilon()))
                } else {
                    T::zero()
                };
            }
        }

        // Center update: weighted mean of (y - beta h) per column.
        for j in 0..p {
            let mut num = T::zero();
            let mut den = T::zero();
            for i in 0..n {
                if mask[[i, j]] {
                    let w = weights[[i, j]];
                    num += w * (residuals[[i, j]] - beta[i] * h[j]);
                    den += w;
                }
            }
            if den > T::zero() {
                mu[j] = num / den;
            }
        }

        // Score update: weighted regression of (y - mu) on h per case.
        for i in 0..n {
            let mut num = T::zero();
            let mut den = T::zero();
            for j in 0..p {
                if mask[[i, j]] {
                    let w = weights[[i, j]];
                    num += w * h[j] * (residuals[[i, j]] - mu[j]);
                    den += w * h[j] * h[j];
                }
            }
            if den > T::zero() {
                beta[i] = num / den;
            }
        }

        // Direction update: weighted normal equations in the basis
        // coefficients. Accumulate per-column sums first, then expand into
        // the (small) coefficient system.
        let mut col_bb = vec![T::zero(); p];
        let mut col_by = vec![T::zero(); p];
        for i in 0..n {
            for j in 0..p {
                if mask[[i, j]] {
                    let w = weights[[i, j]];
                    col_bb[j] += w * beta[i] * beta[i];
                    col_by[j] += w * beta[i] * (residuals[[i, j]] - mu[j]);
                }
            }
        }
        let mut system = Array2::<T>::zeros((m, m));
        let mut rhs = Array1::<T>::zeros(m);
        for j in 0..p {
            if col_bb[j] == T::zero() && col_by[j] == T::zero() {
                continue;
            }
            let row = b.row(j);
            for a in 0..m {
                let ba = row[a];
                if ba == T::zero() {
                    continue;
                }
                rhs[a] += col_by[j] * ba;
                for c in a..m {
                    system[[a, c]] += col_bb[j] * ba * row[c];
                }
            }
        }
        for a in 0..m {
            for c in 0..a {
                system[[a, c]] = system[[c, a]];
            }
        }
        alpha = crate::linalg::solve_spd(&system, &rhs, "component direction update").map_err(
            |e| match e {
                Error::Singular { .. } => Error::DegenerateComponent {
                    reason: "direction update is singular (all scores vanished?)".to_string(),
                },
                other => other,
            },
        )?;
        h = b.dot(&alpha);

        let value = criterion(&mu, &beta, &h);
        let prev = *trace.last().unwrap();
        assert!(
            value <= prev + T::of(1e-10) * (T::one() + prev.abs()),
            "criterion increased from {prev} to {value} at sweep {sweep}"
        );
        trace.push(value);
        if prev - value <= config.tolerance * prev.max(T::epsilon()) {
            converged = true;
            break;
        }
    }

    let norm = h.iter().map(|v| *v * *v).sum::<T>().sqrt();
    if !(norm > T::zero()) {
        return Err(Error::DegenerateComponent {
            reason: "component direction collapsed to zero".to_string(),
        });
    }
    alpha.mapv_inplace(|a| a / norm);
    beta.mapv_inplace(|s| s * norm);

    Ok(ComponentFit {
        alpha,
        beta,
        mu_update: mu,
        criterion_trace: trace,
        iterations,
        converged,
    })
}

/// Joint re-estimation of all scores against the final directions.
///
/// Each case's observed residuals around the center are regressed on the
/// corresponding rows of the direction matrix with a bounded-loss
/// M-regression (L1 start, tuning 4). With the quadratic loss the
/// adjustment is plain least squares. Cases with fewer observed cells than
/// components keep their sequential scores and are reported in the skipped
/// list.
pub fn final_adjustment<T: Real>(
    data: &LongitudinalDataset<T>,
    mu: &Array1<T>,
    directions: &Array2<T>,
    scores: &Array2<T>,
    loss: &LossFamily<T>,
) -> Result<(Array2<T>, Vec<usize>)> {
    let (n, p) = data.values().dim();
    let q = directions.ncols();
    if directions.nrows() != p || scores.dim() != (n, q) || mu.len() != p {
        return Err(Error::ShapeMismatch {
            what: "final_adjustment",
            details: format!(
                "directions {}x{}, scores {:?}, mu {} for {n}x{p} data",
                directions.nrows(),
                q,
                scores.dim(),
                mu.len()
            ),
        });
    }
    let mask = data.mask();
    let values = data.values();
    let mut adjusted = scores.clone();
    let mut skipped = Vec::new();

    for i in 0..n {
        let cols: Vec<usize> = (0..p).filter(|&j| mask[[i, j]]).collect();
        if cols.len() < q {
            skipped.push(i);
            continue;
        }
        let design = Array2::from_shape_fn((cols.len(), q), |(r, k)| directions[[cols[r], k]]);
        let ys: Vec<T> = cols.iter().map(|&j| values[[i, j]] - mu[j]).collect();

        let solved = if loss.is_quadratic() {
            least_squares(&design, &ys)
        } else {
            l1_regression(&design, &ys).and_then(|init| {
                bisquare_regression_m(&design, &ys, T::of(SCORE_ADJUSTMENT_TUNING), &init)
                    .map(|fit| fit.coefficients)
            })
        };
        match solved {
            Ok(coefficients) => adjusted.row_mut(i).assign(&coefficients),
            Err(Error::RankDeficient { .. }) | Err(Error::Singular { .. }) => {
                // The observed rows of the direction matrix do not identify
                // all components for this case; keep its sequential scores.
                skipped.push(i);
            }
            Err(other) => return Err(other),
        }
    }
    Ok((adjusted, skipped))
}

fn least_squares<T: Real>(design: &Array2<T>, ys: &[T]) -> Result<Array1<T>> {
    let y = Array1::from(ys.to_vec());
    let gram = design.t().dot(design);
    let rhs = design.t().dot(&y);
    crate::linalg::solve_spd(&gram, &rhs, "least squares scores")
}

/// Solve `R^T X = A` for `X`, with `R` upper triangular.
fn solve_upper_transpose<T: Real>(r: &Array2<T>, a: &Array2<T>) -> Array2<T> {
    let q = r.nrows();
    let m = a.ncols();
    let mut x = Array2::<T>::zeros((q, m));
    for col in 0..m {
        for k in 0..q {
            let mut v = a[[k, col]];
            for j in 0..k {
                v -= r[[j, k]] * x[[j, col]];
            }
            x[[k, col]] = v / r[[k, k]];
        }
    }
    x
}

/// Fit the sequential robust functional principal component model.
///
/// Stage 0 estimates smooth center and scale curves. Each subsequent stage
/// initializes a direction from a robust pairwise covariance of the current
/// residuals, fits one component by alternating weighted updates, deflates
/// the residuals, and re-estimates the scale curves. Extraction stops at
/// the requested component count, when the target explained proportion is
/// reached, or early when the fit becomes exact (in which case the model
/// carries fewer components than requested). Directions are then
/// orthonormalized (scores and coefficients remapped so fitted values are
/// unchanged) and, unless disabled, all scores are re-estimated jointly.
pub fn fit_mm<T: Real>(
    data: &LongitudinalDataset<T>,
    config: &MmConfig<T>,
) -> Result<FpcaModel<T>> {
    config.validate()?;
    let grid = data.grid();
    let (n, p) = data.values().dim();
    let basis = make_basis(grid, config.knot_divisor)?;
    let m = basis.len();
    if m > p {
        return Err(Error::InvalidParameter {
            name: "knot_divisor",
            reason: format!("basis has {m} functions but the grid only {p} points"),
        });
    }
    let q_cap = match config.components {
        ComponentCount::Fixed(q) => {
            if q > m {
                return Err(Error::InvalidParameter {
                    name: "components",
                    reason: format!("{q} components requested but the basis has only {m} functions"),
                });
            }
            q
        }
        ComponentCount::TargetExplained(_) => m.min(n),
    };

    let mask = data.mask();
    let (mu0, sigma0) = local_location_scale(data, &config.loess)?;
    let mut residuals = data.values().clone();
    for i in 0..n {
        for j in 0..p {
            if mask[[i, j]] {
                residuals[[i, j]] -= mu0[j];
            }
        }
    }

    if !config.loss.is_quadratic() && sigma0.iter().any(|s| !(*s > T::zero())) {
        return Err(Error::DegenerateComponent {
            reason: "initial scale curve is not strictly positive; the data have no \
                     residual variation around the center on part of the grid"
                .to_string(),
        });
    }
    let v0 = unexplained_variance(&residuals, mask, &sigma0, &config.loss)?;
    if !(v0 > T::zero()) {
        return Err(Error::DegenerateComponent {
            reason: "no residual variation around the initial center".to_string(),
        });
    }

    let mut mu_total = mu0;
    let mut sigma = sigma0.clone();
    let mut sigma_stages = vec![sigma0.to_vec()];
    let mut variance_trace = vec![v0];
    let mut raw_alphas: Vec<Array1<T>> = Vec::new();
    let mut raw_betas: Vec<Array1<T>> = Vec::new();
    let mut diagnostics = FitDiagnostics {
        converged: true,
        ..FitDiagnostics::default()
    };

    for _stage in 1..=q_cap {
        let (direction, init_alpha) = init_direction(
            &residuals,
            mask,
            &basis,
            Dispersion::Qn,
            config.overlap_threshold,
        )?;
        let init_beta = init_scores(&residuals, mask, &direction)?;
        let fit = fit_component(&residuals, mask, &sigma, &basis, init_alpha, init_beta, config)?;

        let h = basis.matrix().dot(&fit.alpha);
        for i in 0..n {
            for j in 0..p {
                if mask[[i, j]] {
                    residuals[[i, j]] -= fit.mu_update[j] + fit.beta[i] * h[j];
                }
            }
        }
        mu_total += &fit.mu_update;
        raw_alphas.push(fit.alpha);
        raw_betas.push(fit.beta);
        diagnostics.criterion_traces.push(fit.criterion_trace);
        diagnostics.iterations.push(fit.iterations);
        diagnostics.converged &= fit.converged;

        sigma = residual_scale_curve(grid, &residuals, mask, &config.loess)?;
        sigma_stages.push(sigma.to_vec());

        let exact = residuals
            .iter()
            .zip(mask.iter())
            .all(|(r, m)| !*m || *r == T::zero());
        let vk = if exact {
            T::zero()
        } else {
            if !config.loss.is_quadratic() && sigma.iter().any(|s| !(*s > T::zero())) {
                return Err(Error::DegenerateComponent {
                    reason: "residual scale collapsed to zero on part of the grid".to_string(),
                });
            }
            unexplained_variance(&residuals, mask, &sigma, &config.loss)?
        };
        variance_trace.push(vk);

        if vk == T::zero() {
            break;
        }
        if let ComponentCount::TargetExplained(target) = config.components {
            let explained = T::one() - vk / v0;
            if explained >= target {
                break;
            }
        }
    }

    let q = raw_alphas.len();
    let mut h_raw = Array2::<T>::zeros((p, q));
    let mut alpha_raw = Array2::<T>::zeros((q, m));
    let mut scores_raw = Array2::<T>::zeros((n, q));
    for k in 0..q {
        h_raw
            .column_mut(k)
            .assign(&basis.matrix().dot(&raw_alphas[k]));
        alpha_raw.row_mut(k).assign(&raw_alphas[k]);
        scores_raw.column_mut(k).assign(&raw_betas[k]);
    }
    let (_, r) = orthonormalize_columns(&h_raw)?;
    let alpha = solve_upper_transpose(&r, &alpha_raw);
    let directions = basis.matrix().dot(&alpha.t());
    let scores = scores_raw.dot(&r.t());

    let (scores, skipped) = if config.final_adjustment {
        final_adjustment(data, &mu_total, &directions, &scores, &config.loss)?
    } else {
        (scores, Vec::new())
    };
    diagnostics.adjustment_skipped = skipped;

    let v_last = *variance_trace.last().unwrap();
    let explained = (T::one() - v_last / v0).max(T::zero()).min(T::one());

    let model = FpcaModel {
        schema_version: SCHEMA_VERSION,
        estimator: "mm".to_string(),
        grid: grid.to_vec(),
        mu: mu_total,
        basis: Some(BasisSpec::of(&basis)),
        alpha: Some(alpha),
        directions,
        scores,
        sigma_stages,
        variance_trace,
        explained,
        case_ids: data.case_ids().to_vec(),
        diagnostics,
    };
    model.validate()?;
    Ok(model)
}
