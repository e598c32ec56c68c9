//! A four-step robust principal-component estimator for complete data, plus
//! the classical principal-component baseline.
//!
//! The four steps: clean each row with a robust local smoother, extract
//! robust principal components by minimizing an M-scale of orthogonal
//! residual norms, smooth the resulting eigenvectors in a spline basis
//! chosen by cross-validation, and orthonormalize. Scores are then
//! re-estimated per case on the original (uncleaned) data with a bounded
//! regression, so isolated cell outliers cannot drag the fitted curves.

use ndarray::{Array1, Array2, Axis};

use crate::data::LongitudinalDataset;
use crate::error::{Error, Result};
use crate::kernels::{
    bisquare_regression_m, l1_regression, m_scale_about_zero, median, tau_scale, Bisquare,
    M_SCALE_DELTA, M_SCALE_TUNING,
};
use crate::linalg::{orthonormalize_columns, sym_eigen};
use crate::model::{BasisSpec, FitDiagnostics, FpcaModel, SCHEMA_VERSION};
use crate::scalar::Real;
use crate::smoothing::{gcv_knot_count, LoessConfig, SplineBasis};

/// Bisquare tuning constant of the row-cleaning shrinkage: generous enough
/// to leave moderate residuals essentially alone while capping spikes.
pub const CLEANING_TUNING: f64 = 4.0;
/// Bisquare tuning constant of the per-case score regressions.
pub const SCORE_TUNING: f64 = 4.0;
/// Iteration cap of the reweighted principal-component refinement.
pub const MAX_PCA_ITERATIONS: usize = 100;
/// Relative M-scale change below which the refinement has converged.
pub const PCA_TOLERANCE: f64 = 1e-6;

/// A matrix whose cells have been shrunk toward per-row local centers.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanedMatrix<T> {
    /// Cleaned values, same shape as the input.
    pub values: Array2<T>,
    /// Per-row local center curves (`n x p`).
    pub row_center: Array2<T>,
    /// Per-row residual scales; rows with zero scale passed through
    /// unchanged.
    pub row_scale: Array1<T>,
}

/// Shrink each cell toward its row's local regression curve.
///
/// Per row: a robust Loess curve gives the local center, the tau-scale of
/// the Loess residuals gives the row scale `s_i`, and each cell becomes
/// `center + s_i * psi(residual / s_i)` with the bounded bisquare psi
/// (tuning 4). Small residuals are left essentially unchanged; no cleaned
/// cell can end up farther than `4 s_i` from its local center. Rows whose
/// residual scale is zero (already in the smoother's reproduction class)
/// pass through unchanged.
pub fn clean_rows<T: Real>(data: &LongitudinalDataset<T>) -> Result<CleanedMatrix<T>> {
    if !data.is_complete() {
        return Err(Error::IncompleteData { estimator: "naive" });
    }
    let (n, p) = (data.n(), data.p());
    let grid = data.grid();
    let x = data.values();
    let loess = LoessConfig::<T>::default();
    let psi = Bisquare::new(T::of(CLEANING_TUNING))?;

    let mut values = Array2::zeros((n, p));
    let mut row_center = Array2::zeros((n, p));
    let mut row_scale = Array1::zeros(n);
    for i in 0..n {
        let row: Vec<T> = x.row(i).to_vec();
        let center = crate::smoothing::robust_loess_1d(grid, &row, &loess)?;
        let residuals: Vec<T> = (0..p).map(|j| row[j] - center[j]).collect();
        let s = tau_scale(&residuals)?.value;
        row_scale[i] = s;
        for j in 0..p {
            row_center[[i, j]] = center[j];
            values[[i, j]] = if s == T::zero() {
                row[j]
            } else {
                center[j] + s * psi.psi_unchecked(residuals[j] / s)
            };
        }
    }
    Ok(CleanedMatrix {
        values,
        row_center,
        row_scale,
    })
}

/// Result of the reweighted robust principal-component extraction.
#[derive(Debug, Clone)]
pub struct SmRobustPca<T> {
    /// Robust center of the rows.
    pub center: Array1<T>,
    /// Orthonormal directions, `p x q`.
    pub directions: Array2<T>,
    /// Projection scores of each row onto the directions, `n x q`.
    pub scores: Array2<T>,
    /// M-scale of the orthogonal residual norms after `q` components,
    /// divided by the M-scale of the centered row norms. Zero means exact
    /// rank-q structure.
    pub unexplained_ratio: T,
    /// M-scale of the centered row norms (the `q = 0` reference).
    pub total_scale: T,
    /// M-scale of the orthogonal residual norms at the accepted iterate.
    pub residual_scale: T,
    /// M-scale per refinement iteration.
    pub scale_trace: Vec<T>,
    /// False when the iteration cap was hit before the M-scale settled; the
    /// best (smallest-scale) iterate is returned in that case.
    pub converged: bool,
}

/// Robust principal components minimizing the bisquare M-scale of the
/// orthogonal residual norms.
///
/// Starting from spherical principal components (the eigenvectors of the
/// covariance of the rows projected onto the unit sphere around their
/// spatial median, which bounds the influence of any single row), the
/// refinement alternates: residual norms to the current subspace, an
/// M-scale of those norms, bisquare weights of the scaled norms, then a
/// weighted mean and the top eigenvectors of the weighted covariance. Stops
/// when the M-scale's relative change drops below 1e-6 or after 100
/// iterations (returning the smallest-scale iterate with `converged =
/// false`).
pub fn sm_robust_pca<T: Real>(x: &Array2<T>, q: usize) -> Result<SmRobustPca<T>> {
    let (n, p) = x.dim();
    if q == 0 {
        return Err(Error::InvalidParameter {
            name: "components",
            reason: "at least one component is required".to_string(),
        });
    }
    if q > p || n <= q {
        return Err(Error::ShapeMismatch {
            what: "sm_robust_pca",
            details: format!("{q} components from {n} rows of dimension {p}"),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "sm_robust_pca",
        });
    }

    let mut center = spatial_median(x)?;
    let mut directions = spherical_directions(x, &center, q)?;
    let kernel = Bisquare::new(T::of(M_SCALE_TUNING))?;

    let mut scale_trace: Vec<T> = Vec::new();
    let mut best: Option<(T, Array1<T>, Array2<T>)> = None;
    let mut converged = false;
    for _ in 0..MAX_PCA_ITERATIONS {
        let norms = residual_norms(x, &center, &directions);
        let s = m_scale_about_zero(&norms, T::of(M_SCALE_DELTA), T::of(M_SCALE_TUNING))?.value;
        let improved = best.as_ref().map_or(true, |(bs, _, _)| s < *bs);
        if improved {
            best = Some((s, center.clone(), directions.clone()));
        }
        let settled = scale_trace
            .last()
            .is_some_and(|prev| (*prev - s).abs() <= T::of(PCA_TOLERANCE) * prev.abs());
        scale_trace.push(s);
        if s == T::zero() || settled {
            converged = true;
            break;
        }

        // Reweighted step: bounded weights of the scaled residual norms.
        let weights: Vec<T> = norms
            .iter()
            .map(|&r| kernel.weight_unchecked(r / s))
            .collect();
        let total: T = weights.iter().fold(T::zero(), |a, &w| a + w);
        if total <= T::zero() {
            break;
        }
        let mut next_center = Array1::<T>::zeros(p);
        for i in 0..n {
            for j in 0..p {
                next_center[j] += weights[i] * x[[i, j]];
            }
        }
        next_center.mapv_inplace(|v| v / total);
        let mut cov = Array2::<T>::zeros((p, p));
        for i in 0..n {
            if weights[i] == T::zero() {
                continue;
            }
            let dev: Vec<T> = (0..p).map(|j| x[[i, j]] - next_center[j]).collect();
            for a in 0..p {
                let wd = weights[i] * dev[a];
                for b in a..p {
                    cov[[a, b]] += wd * dev[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                cov[[a, b]] = cov[[b, a]];
            }
        }
        cov.mapv_inplace(|v| v / total);
        center = next_center;
        directions = leading_eigenvectors(&cov, q)?;
    }

    let (residual_scale, center, directions) = best.expect("at least one iterate is recorded");
    let centered_norms: Vec<T> = (0..n)
        .map(|i| {
            (0..p)
                .map(|j| {
                    let d = x[[i, j]] - center[j];
                    d * d
                })
                .sum::<T>()
                .sqrt()
        })
        .collect();
    let total_scale =
        m_scale_about_zero(&centered_norms, T::of(M_SCALE_DELTA), T::of(M_SCALE_TUNING))?.value;
    let unexplained_ratio = if total_scale > T::zero() {
        (residual_scale / total_scale).min(T::one())
    } else {
        T::zero()
    };

    let mut scores = Array2::<T>::zeros((n, q));
    for i in 0..n {
        for k in 0..q {
            let mut dot = T::zero();
            for j in 0..p {
                dot += (x[[i, j]] - center[j]) * directions[[j, k]];
            }
            scores[[i, k]] = dot;
        }
    }

    Ok(SmRobustPca {
        center,
        directions,
        scores,
        unexplained_ratio,
        total_scale,
        residual_scale,
        scale_trace,
        converged,
    })
}

/// Spatial median of the rows (the point minimizing the summed Euclidean
/// distances), by Weiszfeld iteration from the coordinate-wise median.
fn spatial_median<T: Real>(x: &Array2<T>) -> Result<Array1<T>> {
    let (n, p) = x.dim();
    let mut m = Array1::<T>::zeros(p);
    let mut column = Vec::with_capacity(n);
    for j in 0..p {
        column.clear();
        column.extend(x.column(j).iter().copied());
        m[j] = median(&column)?;
    }
    let overall_scale = x.iter().fold(T::zero(), |a, v| a.max(v.abs())).max(T::one());
    for _ in 0..100 {
        let mut num = Array1::<T>::zeros(p);
        let mut denom = T::zero();
        let mut moved = false;
        for i in 0..n {
            let dist = (0..p)
                .map(|j| {
                    let d = x[[i, j]] - m[j];
                    d * d
                })
                .sum::<T>()
                .sqrt();
            if dist <= T::of(1e-12) * overall_scale {
                continue;
            }
            let w = T::one() / dist;
            for j in 0..p {
                num[j] += w * x[[i, j]];
            }
            denom += w;
            moved = true;
        }
        if !moved {
            break;
        }
        let next = num.mapv(|v| v / denom);
        let change = (0..p)
            .map(|j| (next[j] - m[j]).abs())
            .fold(T::zero(), T::max);
        m = next;
        if change <= T::of(1e-10) * overall_scale {
            break;
        }
    }
    Ok(m)
}

/// Principal directions of the rows projected onto the unit sphere around
/// `center`. Rows at the center are skipped.
fn spherical_directions<T: Real>(
    x: &Array2<T>,
    center: &Array1<T>,
    q: usize,
) -> Result<Array2<T>> {
    let (n, p) = x.dim();
    let overall_scale = x.iter().fold(T::zero(), |a, v| a.max(v.abs())).max(T::one());
    let mut cov = Array2::<T>::zeros((p, p));
    let mut used = 0usize;
    for i in 0..n {
        let dev: Vec<T> = (0..p).map(|j| x[[i, j]] - center[j]).collect();
        let norm = dev.iter().map(|d| *d * *d).sum::<T>().sqrt();
        if norm <= T::of(1e-12) * overall_scale {
            continue;
        }
        for a in 0..p {
            let u = dev[a] / norm;
            for b in a..p {
                cov[[a, b]] += u * (dev[b] / norm);
            }
        }
        used += 1;
    }
    if used <= q {
        return Err(Error::TooFewValues {
            what: "spherical_directions",
            needed: q + 1,
            got: used,
        });
    }
    for a in 0..p {
        for b in 0..a {
            cov[[a, b]] = cov[[b, a]];
        }
    }
    leading_eigenvectors(&cov, q)
}

/// Top-q eigenvectors with a deterministic sign (largest-magnitude entry
/// positive).
fn leading_eigenvectors<T: Real>(cov: &Array2<T>, q: usize) -> Result<Array2<T>> {
    let eig = sym_eigen(cov)?;
    let p = cov.nrows();
    let mut out = Array2::<T>::zeros((p, q));
    for k in 0..q {
        let col = eig.vectors.column(k);
        let mut arg = 0;
        for j in 1..p {
            if col[j].abs() > col[arg].abs() {
                arg = j;
            }
        }
        let flip = if col[arg] < T::zero() {
            -T::one()
        } else {
            T::one()
        };
        for j in 0..p {
            out[[j, k]] = flip * col[j];
        }
    }
    Ok(out)
}

/// Euclidean norms of the residuals after projecting each centered row onto
/// the subspace.
fn residual_norms<T: Real>(x: &Array2<T>, center: &Array1<T>, v: &Array2<T>) -> Vec<T> {
    let (n, p) = x.dim();
    let q = v.ncols();
    let mut norms = Vec::with_capacity(n);
    let mut dev = vec![T::zero(); p];
    let mut proj = vec![T::zero(); q];
    for i in 0..n {
        for j in 0..p {
            dev[j] = x[[i, j]] - center[j];
        }
        for k in 0..q {
            let mut dot = T::zero();
            for j in 0..p {
                dot += dev[j] * v[[j, k]];
            }
            proj[k] = dot;
        }
        let mut ss = T::zero();
        for j in 0..p {
            let mut r = dev[j];
            for k in 0..q {
                r -= proj[k] * v[[j, k]];
            }
            ss += r * r;
        }
        norms.push(ss.sqrt());
    }
    norms
}

/// Project each column of `directions` onto the spline basis and
/// orthonormalize the smoothed columns, returning the orthonormal directions
/// and their basis coefficients (one row per direction).
fn smooth_and_orthonormalize<T: Real>(
    basis: &SplineBasis<T>,
    directions: &Array2<T>,
) -> Result<(Array2<T>, Array2<T>)> {
    let q = directions.ncols();
    let m = basis.len();
    let p = directions.nrows();
    let mut coeffs = Array2::<T>::zeros((m, q));
    let mut smoothed = Array2::<T>::zeros((p, q));
    for k in 0..q {
        let col: Vec<T> = directions.column(k).to_vec();
        let (a, s) = crate::smoothing::smooth_with_basis(basis, &col, None)?;
        coeffs.column_mut(k).assign(&a);
        smoothed.column_mut(k).assign(&s);
    }
    let (_, r) = orthonormalize_columns(&smoothed)?;
    // Map the Gram-Schmidt factor back onto the coefficients
    // (A_ortho = A R^-1, forward substitution over columns), then rebuild
    // the directions from the coefficients so the two stay exactly
    // consistent.
    let mut ortho_coeffs = Array2::<T>::zeros((m, q));
    for k in 0..q {
        let mut col: Array1<T> = coeffs.column(k).to_owned();
        for l in 0..k {
            let rkl = r[[l, k]];
            for row in 0..m {
                let v = ortho_coeffs[[row, l]] * rkl;
                col[row] -= v;
            }
        }
        let rkk = r[[k, k]];
        for row in 0..m {
            ortho_coeffs[[row, k]] = col[row] / rkk;
        }
    }
    let rebuilt = basis.matrix().dot(&ortho_coeffs);
    Ok((rebuilt, ortho_coeffs))
}

/// The four-step estimator: row cleaning, robust principal components,
/// spline smoothing of the directions, orthonormalization.
///
/// Scores are then re-estimated per case on the original data with a
/// bounded bisquare regression (L1 start), so the cleaned matrix only
/// drives the direction estimate. Requires complete data; decimated
/// datasets need the sequential estimator instead.
pub fn fit_naive<T: Real>(data: &LongitudinalDataset<T>, q: usize) -> Result<FpcaModel<T>> {
    if !data.is_complete() {
        return Err(Error::IncompleteData { estimator: "naive" });
    }
    if q == 0 {
        return Err(Error::InvalidParameter {
            name: "components",
            reason: "at least one component is required".to_string(),
        });
    }
    let (n, p) = (data.n(), data.p());
    if q > p || n <= q {
        return Err(Error::ShapeMismatch {
            what: "fit_naive",
            details: format!("{q} components from {n} cases of dimension {p}"),
        });
    }
    let grid = data.grid();

    let cleaned = clean_rows(data)?;
    let sm = sm_robust_pca(&cleaned.values, q)?;

    let upper = (p / 4).max(2);
    let candidates: Vec<usize> = (2..=upper).filter(|k| k + 4 <= p).collect();
    if candidates.is_empty() {
        return Err(Error::TooFewValues {
            what: "fit_naive knot selection",
            needed: 6,
            got: p,
        });
    }
    let interior = gcv_knot_count(grid, &sm.directions, &candidates)?;
    let basis = SplineBasis::with_interior_knots(grid, interior, 3)?;
    let (directions, ortho_coeffs) = smooth_and_orthonormalize(&basis, &sm.directions)?;

    let x = data.values();
    let mut scores = Array2::<T>::zeros((n, q));
    for i in 0..n {
        let ys: Vec<T> = (0..p).map(|j| x[[i, j]] - sm.center[j]).collect();
        let init = l1_regression(&directions, &ys)?;
        let fit = bisquare_regression_m(&directions, &ys, T::of(SCORE_TUNING), &init)?;
        scores.row_mut(i).assign(&fit.coefficients);
    }

    let explained = (T::one() - sm.unexplained_ratio).max(T::zero()).min(T::one());
    let iterations = sm.scale_trace.len();
    let model = FpcaModel {
        schema_version: SCHEMA_VERSION,
        estimator: "naive".to_string(),
        grid: grid.to_vec(),
        mu: sm.center.clone(),
        basis: Some(BasisSpec::of(&basis)),
        alpha: Some(ortho_coeffs.t().to_owned()),
        directions,
        scores,
        sigma_stages: Vec::new(),
        variance_trace: vec![sm.total_scale, sm.residual_scale],
        explained,
        case_ids: data.case_ids().to_vec(),
        diagnostics: FitDiagnostics {
            criterion_traces: vec![sm.scale_trace],
            iterations: vec![iterations],
            adjustment_skipped: Vec::new(),
            converged: sm.converged,
        },
    };
    model.validate()?;
    Ok(model)
}

/// Classical principal components: column-mean center, top eigenvectors of
/// the sample covariance, least-squares scores. The non-robust baseline.
pub fn fit_classical<T: Real>(data: &LongitudinalDataset<T>, q: usize) -> Result<FpcaModel<T>> {
    if !data.is_complete() {
        return Err(Error::IncompleteData {
            estimator: "classical",
        });
    }
    if q == 0 {
        return Err(Error::InvalidParameter {
            name: "components",
            reason: "at least one component is required".to_string(),
        });
    }
    let (n, p) = (data.n(), data.p());
    if q > n.min(p) {
        return Err(Error::ShapeMismatch {
            what: "fit_classical",
            details: format!("{q} components from {n} cases of dimension {p}"),
        });
    }
    let x = data.values();
    let mean = x.mean_axis(Axis(0)).expect("n > 0 by construction");
    let centered = x - &mean;
    let mut cov = centered.t().dot(&centered);
    let dof = T::of((n.max(2) - 1) as f64);
    cov.mapv_inplace(|v| v / dof);
    let directions = leading_eigenvectors(&cov, q)?;
    // Orthonormal directions make least squares a plain projection.
    let scores = centered.dot(&directions);

    let mut v0 = T::zero();
    let mut vq = T::zero();
    for i in 0..n {
        for j in 0..p {
            let d = centered[[i, j]];
            v0 += d * d;
        }
        for j in 0..p {
            let mut r = centered[[i, j]];
            for k in 0..q {
                r -= scores[[i, k]] * directions[[j, k]];
            }
            vq += r * r;
        }
    }
    v0 /= T::of(n as f64);
    vq /= T::of(n as f64);
    let explained = if v0 > T::zero() {
        (T::one() - vq / v0).max(T::zero()).min(T::one())
    } else {
        T::zero()
    };

    let model = FpcaModel {
        schema_version: SCHEMA_VERSION,
        estimator: "classical".to_string(),
        grid: data.grid().to_vec(),
        mu: mean,
        basis: None,
        alpha: None,
        directions,
        scores,
        sigma_stages: Vec::new(),
        variance_trace: vec![v0, vq],
        explained,
        case_ids: data.case_ids().to_vec(),
        diagnostics: FitDiagnostics {
            criterion_traces: Vec::new(),
            iterations: Vec::new(),
            adjustment_skipped: Vec::new(),
            converged: true,
        },
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::subspace_sin;
    use ndarray::s;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::PI;

    fn uniform_grid(p: usize) -> Vec<f64> {
        (0..p).map(|j| j as f64 / (p - 1) as f64).collect()
    }

    /// Center curve plus three orthonormal shapes, all orthogonal to the
    /// center, mirroring the population the casewise-contamination tests
    /// use elsewhere in the crate.
    fn population(p: usize) -> (Vec<f64>, Vec<f64>, Array2<f64>) {
        let grid = uniform_grid(p);
        let mu: Vec<f64> = grid
            .iter()
            .map(|t| 45.0 + 8.0 * (PI * t).sin() + 12.0 * t)
            .collect();
        let mu_norm = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
        let fns: [fn(f64) -> f64; 3] = [
            |t| ((t - 0.5) / 0.1).tanh(),
            |t| (2.0 * PI * t).cos(),
            |t| (3.0 * PI * t).cos(),
        ];
        let mut raw = Array2::from_shape_fn((p, 3), |(j, c)| fns[c](grid[j]));
        for c in 0..3 {
            let overlap: f64 = (0..p).map(|j| raw[[j, c]] * mu[j] / mu_norm).sum();
            for j in 0..p {
                raw[[j, c]] -= overlap * mu[j] / mu_norm;
            }
        }
        let dirs = orthonormalize_columns(&raw).unwrap().0;
        (grid, mu, dirs)
    }

    /// Gaussian two-component sample; the first `n_out` rows are replaced by
    /// `k * sqrt(lambda_1)` times the third (unused) shape when `k > 0`.
    fn sample(
        grid: &[f64],
        mu: &[f64],
        dirs: &Array2<f64>,
        n: usize,
        noise: f64,
        k: f64,
        n_out: usize,
        seed: u64,
    ) -> (LongitudinalDataset<f64>, Array2<f64>) {
        let p = grid.len();
        let sds = [30.0_f64.sqrt(), 15.0_f64.sqrt()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Array2::zeros((n, p));
        for i in 0..n {
            let z1: f64 = rng.sample::<f64, _>(StandardNormal);
            let z2: f64 = rng.sample::<f64, _>(StandardNormal);
            for j in 0..p {
                values[[i, j]] = mu[j]
                    + sds[0] * z1 * dirs[[j, 0]]
                    + sds[1] * z2 * dirs[[j, 1]]
                    + noise * rng.sample::<f64, _>(StandardNormal);
            }
        }
        if k > 0.0 {
            let lambda1 = 30.0 + noise * noise;
            for i in 0..n_out {
                for j in 0..p {
                    values[[i, j]] = k * lambda1.sqrt() * dirs[[j, 2]];
                }
            }
        }
        let ids = (0..n).map(|i| format!("c{i}")).collect();
        let data = LongitudinalDataset::complete(grid.to_vec(), values.clone(), ids).unwrap();
        (data, values)
    }

    fn classical_direction_matrix(x: &Array2<f64>, q: usize) -> Array2<f64> {
        let mean = x.mean_axis(Axis(0)).unwrap();
        let xc = x - &mean;
        let cov = xc.t().dot(&xc) / (x.nrows() as f64 - 1.0);
        sym_eigen(&cov).unwrap().vectors.slice(s![.., ..q]).to_owned()
    }

    #[test]
    fn cleaning_reproduces_rows_the_smoother_represents_exactly() {
        let p = 30;
        let grid = uniform_grid(p);
        let mut values = Array2::zeros((5, p));
        for i in 0..5 {
            for j in 0..p {
                values[[i, j]] = 1.0 + i as f64 + (2.0 + i as f64) * grid[j];
            }
        }
        let ids = (0..5).map(|i| format!("c{i}")).collect();
        let data = LongitudinalDataset::complete(grid, values.clone(), ids).unwrap();
        let cleaned = clean_rows(&data).unwrap();
        for i in 0..5 {
            assert!(
                cleaned.row_scale[i].abs() < 1e-10,
                "straight lines leave no residual scale"
            );
            for j in 0..p {
                assert!((cleaned.values[[i, j]] - values[[i, j]]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn cleaning_caps_a_giant_spike_near_its_local_center() {
        let p = 50;
        let grid = uniform_grid(p);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut values = Array2::zeros((4, p));
        for i in 0..4 {
            for j in 0..p {
                values[[i, j]] =
                    10.0 * (PI * grid[j]).sin() + 0.5 * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let spike_row = 2;
        let spike_col = 25;
        values[[spike_row, spike_col]] += 500.0;
        let ids = (0..4).map(|i| format!("c{i}")).collect();
        let data = LongitudinalDataset::complete(grid, values.clone(), ids).unwrap();
        let cleaned = clean_rows(&data).unwrap();

        let s = cleaned.row_scale[spike_row];
        assert!(s > 0.0);
        for j in 0..p {
            let dev = (cleaned.values[[spike_row, j]] - cleaned.row_center[[spike_row, j]]).abs();
            assert!(
                dev <= CLEANING_TUNING * s * (1.0 + 1e-12),
                "cell {j} sits {dev} from the local center with scale {s}"
            );
        }
        // The spike itself was essentially removed, not merely reduced.
        let spike_dev =
            (cleaned.values[[spike_row, spike_col]] - cleaned.row_center[[spike_row, spike_col]]).abs();
        assert!(spike_dev < 10.0, "spike survived cleaning: {spike_dev}");
    }

    #[test]
    fn cleaning_leaves_clean_gaussian_rows_essentially_unchanged() {
        let p = 50;
        let noise = 0.5;
        let grid = uniform_grid(p);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut values = Array2::zeros((20, p));
        for i in 0..20 {
            for j in 0..p {
                values[[i, j]] = 10.0 * (PI * grid[j]).sin()
                    + 3.0 * grid[j]
                    + noise * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let ids = (0..20).map(|i| format!("c{i}")).collect();
        let data = LongitudinalDataset::complete(grid, values.clone(), ids).unwrap();
        let cleaned = clean_rows(&data).unwrap();
        let mean_change = cleaned
            .values
            .iter()
            .zip(values.iter())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / (20.0 * p as f64);
        assert!(
            mean_change < 0.2 * noise,
            "cleaning moved clean cells by {mean_change} on average"
        );
    }

    #[test]
    fn robust_pca_is_exact_on_rank_q_data() {
        let p = 30;
        let (grid, mu, dirs) = population(p);
        let _ = grid;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40;
        let mut x = Array2::zeros((n, p));
        for i in 0..n {
            let z1: f64 = rng.sample::<f64, _>(StandardNormal);
            let z2: f64 = rng.sample::<f64, _>(StandardNormal);
            for j in 0..p {
                x[[i, j]] = mu[j] + 5.0 * z1 * dirs[[j, 0]] + 2.0 * z2 * dirs[[j, 1]];
            }
        }
        let sm = sm_robust_pca(&x, 2).unwrap();
        assert!(
            sm.unexplained_ratio <= 1e-12,
            "rank-2 data left ratio {}",
            sm.unexplained_ratio
        );
        let scale = x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        for i in 0..n {
            for j in 0..p {
                let mut fitted = sm.center[j];
                for k in 0..2 {
                    fitted += sm.scores[[i, k]] * sm.directions[[j, k]];
                }
                assert!(
                    (fitted - x[[i, j]]).abs() <= 1e-8 * scale,
                    "cell ({i},{j}) reconstructed poorly"
                );
            }
        }
    }

    #[test]
    fn robust_pca_resists_casewise_outliers_where_classical_breaks() {
        let (grid, mu, dirs) = population(50);
        let truth = dirs.slice(s![.., ..2]).to_owned();
        let (_, values) = sample(&grid, &mu, &dirs, 100, 0.05_f64.sqrt(), 3.0, 10, 21);
        let sm = sm_robust_pca(&values, 2).unwrap();
        let robust_sin = subspace_sin(&sm.directions, &truth).unwrap();
        let classical_sin = subspace_sin(&classical_direction_matrix(&values, 2), &truth).unwrap();
        assert!(robust_sin < 0.1, "robust subspace off by {robust_sin}");
        assert!(
            classical_sin > 0.5,
            "outliers too weak to break the plain covariance ({classical_sin})"
        );
    }

    #[test]
    fn robust_pca_scale_trace_is_non_increasing() {
        let (grid, mu, dirs) = population(40);
        for seed in [1, 2, 3] {
            let (_, values) = sample(&grid, &mu, &dirs, 60, 0.5, 2.0, 6, seed);
            let sm = sm_robust_pca(&values, 2).unwrap();
            assert!(sm.scale_trace.len() >= 2);
            for w in sm.scale_trace.windows(2) {
                assert!(
                    w[1] <= w[0] * (1.0 + 1e-10),
                    "scale rose from {} to {} (seed {seed})",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn naive_directions_are_orthonormal_and_spline_consistent() {
        let (grid, mu, dirs) = population(50);
        let (data, _) = sample(&grid, &mu, &dirs, 80, 0.3, 0.0, 0, 17);
        let model = fit_naive(&data, 2).unwrap();
        model.validate().unwrap();
        assert_eq!(model.estimator, "naive");
        assert!(model.basis.is_some());
        let gram = model.directions.t().dot(&model.directions);
        for a in 0..2 {
            for b in 0..2 {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!(
                    (gram[[a, b]] - expect).abs() < 1e-8,
                    "gram[{a},{b}] = {}",
                    gram[[a, b]]
                );
            }
        }
    }

    #[test]
    fn smoothing_then_orthonormalizing_smooth_directions_is_idempotent() {
        let p = 50;
        let grid = uniform_grid(p);
        let basis = SplineBasis::with_interior_knots(&grid, 6, 3).unwrap();
        let raw = Array2::from_shape_fn((p, 2), |(j, c)| {
            if c == 0 {
                (PI * grid[j]).sin()
            } else {
                (2.0 * PI * grid[j]).cos()
            }
        });
        let (smooth, _) = smooth_and_orthonormalize(&basis, &raw).unwrap();
        let (again, _) = smooth_and_orthonormalize(&basis, &smooth).unwrap();
        for (a, b) in again.iter().zip(smooth.iter()) {
            assert!((a - b).abs() < 1e-8, "pipeline moved a settled direction");
        }
    }

    #[test]
    fn naive_matches_classical_on_clean_data() {
        let (grid, mu, dirs) = population(50);
        let (data, values) = sample(&grid, &mu, &dirs, 100, 0.05_f64.sqrt(), 0.0, 0, 29);
        let naive = fit_naive(&data, 2).unwrap();
        let classical = fit_classical(&data, 2).unwrap();

        let angle = subspace_sin(&naive.directions, &classical.directions).unwrap();
        assert!(angle <= 0.05, "clean-data subspaces disagree: {angle}");

        let mae = |fitted: &Array2<f64>| {
            fitted
                .iter()
                .zip(values.iter())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / (100.0 * 50.0)
        };
        let naive_mae = mae(&naive.fitted_values());
        let classical_mae = mae(&classical.fitted_values());
        let ratio = naive_mae / classical_mae;
        // Least-squares projection minimizes in-sample residuals by construction;
        // the bounded score regressions concede ~2% by refusing to chase noise.
        assert!(
            (ratio - 1.0).abs() <= 0.03,
            "clean-data MAE ratio {ratio} (naive {naive_mae}, classical {classical_mae})"
        );
    }

    #[test]
    fn naive_survives_case_contamination_where_classical_breaks() {
        let (grid, mu, dirs) = population(50);
        let truth = dirs.slice(s![.., ..2]).to_owned();
        let (data, values) = sample(&grid, &mu, &dirs, 100, 0.05_f64.sqrt(), 3.0, 10, 33);
        let model = fit_naive(&data, 2).unwrap();
        let naive_sin = subspace_sin(&model.directions, &truth).unwrap();
        let classical_sin = subspace_sin(&classical_direction_matrix(&values, 2), &truth).unwrap();
        assert!(naive_sin < 0.1, "contaminated fit off by {naive_sin}");
        assert!(classical_sin > 0.9, "baseline unexpectedly survived ({classical_sin})");
    }

    #[test]
    fn classical_is_exact_on_rank_q_data_and_matches_a_gram_route_oracle() {
        let p = 15;
        let n = 40;
        let grid = uniform_grid(p);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut values = Array2::zeros((n, p));
        for i in 0..n {
            for j in 0..p {
                values[[i, j]] = rng.sample::<f64, _>(StandardNormal);
            }
        }
        let ids = (0..n).map(|i| format!("c{i}")).collect();
        let data = LongitudinalDataset::complete(grid.clone(), values.clone(), ids).unwrap();
        let model = fit_classical(&data, 3).unwrap();
        model.validate().unwrap();

        // Same subspace via the n x n Gram matrix route.
        let mean = values.mean_axis(Axis(0)).unwrap();
        let xc = &values - &mean;
        let gram = xc.dot(&xc.t());
        let eig = sym_eigen(&gram).unwrap();
        let mut gram_dirs = Array2::zeros((p, 3));
        for k in 0..3 {
            let w = eig.vectors.column(k);
            let v = xc.t().dot(&w);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            gram_dirs.column_mut(k).assign(&(&v / norm));
        }
        let angle = subspace_sin(&model.directions, &gram_dirs).unwrap();
        assert!(angle < 1e-8, "two eigen routes disagree: {angle}");

        // Exact rank-q input reconstructs exactly.
        let (grid2, mu, dirs) = population(20);
        let mut exact = Array2::zeros((10, 20));
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for i in 0..10 {
            let z1: f64 = rng.sample::<f64, _>(StandardNormal);
            let z2: f64 = rng.sample::<f64, _>(StandardNormal);
            for j in 0..20 {
                exact[[i, j]] = mu[j] + 4.0 * z1 * dirs[[j, 0]] + 2.0 * z2 * dirs[[j, 1]];
            }
        }
        let ids = (0..10).map(|i| format!("c{i}")).collect();
        let data = LongitudinalDataset::complete(grid2, exact.clone(), ids).unwrap();
        let model = fit_classical(&data, 2).unwrap();
        let fitted = model.fitted_values();
        let scale = exact.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        for (a, b) in fitted.iter().zip(exact.iter()) {
            assert!((a - b).abs() <= 1e-10 * scale);
        }
        assert!((model.explained - 1.0).abs() < 1e-10);
    }

    #[test]
    fn incomplete_data_is_refused_by_both_complete_data_estimators() {
        let (grid, mu, dirs) = population(30);
        let (data, _) = sample(&grid, &mu, &dirs, 40, 0.3, 0.0, 0, 51);
        let holey = data.decimate(0.5, 7).unwrap();
        assert!(matches!(
            fit_naive(&holey, 2),
            Err(Error::IncompleteData { estimator: "naive" })
        ));
        assert!(matches!(
            fit_classical(&holey, 2),
            Err(Error::IncompleteData { estimator: "classical" })
        ));
        assert!(matches!(
            clean_rows(&holey),
            Err(Error::IncompleteData { estimator: "naive" })
        ));
    }

    #[test]
    fn degenerate_requests_are_rejected() {
        let (grid, mu, dirs) = population(30);
        let (data, values) = sample(&grid, &mu, &dirs, 10, 0.3, 0.0, 0, 61);
        assert!(fit_naive(&data, 0).is_err());
        assert!(fit_classical(&data, 0).is_err());
        assert!(fit_classical(&data, 31).is_err());
        assert!(sm_robust_pca(&values, 10).is_err());
    }

}
