//! Locally weighted regression with bisquare robustness iterations.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::kernels::{median, Bisquare};
use crate::linalg;
use crate::scalar::Real;

/// Configuration of the robust local regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoessConfig<T> {
    /// Fraction of the sample in each local neighborhood, in `(0, 1]`.
    pub span: T,
    /// Local polynomial degree, 1 or 2.
    pub degree: usize,
    /// Rounds of bisquare residual down-weighting.
    pub robust_iterations: usize,
}

impl<T: Real> Default for LoessConfig<T> {
    fn default() -> Self {
        Self {
            span: T::of(0.3),
            degree: 1,
            robust_iterations: 4,
        }
    }
}

impl<T: Real> LoessConfig<T> {
    fn validate(&self, n: usize, what: &'static str) -> Result<()> {
        if !(self.span > T::zero() && self.span <= T::one()) {
            return Err(Error::InvalidParameter {
                name: "span",
                reason: format!("must lie in (0, 1], got {}", self.span),
            });
        }
        if !(1..=2).contains(&self.degree) {
            return Err(Error::InvalidParameter {
                name: "degree",
                reason: format!("local degree must be 1 or 2, got {}", self.degree),
            });
        }
        if n < self.degree + 2 {
            return Err(Error::TooFewValues {
                what,
                needed: self.degree + 2,
                got: n,
            });
        }
        Ok(())
    }

    fn window_size(&self, n: usize) -> usize {
        let k = (self.span.as_f64() * n as f64).ceil() as usize;
        k.clamp(self.degree + 2, n)
    }
}

#[inline]
fn tricube<T: Real>(u: T) -> T {
    if u >= T::one() {
        T::zero()
    } else {
        let w = T::one() - u * u * u;
        w * w * w
    }
}

/// Contiguous window of the `k` abscissae nearest to `t0` (ties resolved
/// toward the left). `xs` must be sorted ascending.
fn window_around<T: Real>(xs: &[T], t0: T, k: usize) -> (usize, usize) {
    let n = xs.len();
    let k = k.min(n);
    let start = xs.partition_point(|&x| x < t0);
    let (mut lo, mut hi) = (start, start);
    while hi - lo < k {
        if lo == 0 {
            hi = k;
            break;
        }
        if hi == n {
            lo = n - k;
            break;
        }
        if t0 - xs[lo - 1] <= xs[hi] - t0 {
            lo -= 1;
        } else {
            hi += 1;
        }
    }
    (lo, hi)
}

/// Weighted polynomial fit over `[lo, hi)` evaluated at `t0`.
///
/// Falls back to lower degrees when the weighted design loses rank, and to
/// the plain window mean when every weight vanishes.
fn fit_window<T: Real>(
    xs: &[T],
    ys: &[T],
    weights: &[T],
    lo: usize,
    hi: usize,
    degree: usize,
    t0: T,
) -> T {
    for d in (1..=degree).rev() {
        let dim = d + 1;
        let mut a = Array2::<T>::zeros((dim, dim));
        let mut b = Array1::<T>::zeros(dim);
        for j in lo..hi {
            let w = weights[j - lo];
            if w == T::zero() {
                continue;
            }
            let u = xs[j] - t0;
            let mut pow = [T::one(); 5];
            for c in 1..2 * d + 1 {
                pow[c] = pow[c - 1] * u;
            }
            for c1 in 0..dim {
                b[c1] += w * pow[c1] * ys[j];
                for c2 in c1..dim {
                    a[[c1, c2]] += w * pow[c1 + c2];
                }
            }
        }
        for c1 in 0..dim {
            for c2 in 0..c1 {
                a[[c1, c2]] = a[[c2, c1]];
            }
        }
        if let Ok(sol) = linalg::solve_spd(&a, &b, "loess window") {
            return sol[0];
        }
    }
    // Degree-0 fallback: weighted mean, then plain mean.
    let mut num = T::zero();
    let mut den = T::zero();
    for j in lo..hi {
        num += weights[j - lo] * ys[j];
        den += weights[j - lo];
    }
    if den > T::zero() {
        num / den
    } else {
        ys[lo..hi].iter().copied().sum::<T>() / T::of((hi - lo) as f64)
    }
}

/// One loess evaluation at `t0` given per-point robustness weights.
fn loess_at<T: Real>(xs: &[T], ys: &[T], robust_w: &[T], cfg: &LoessConfig<T>, t0: T) -> T {
    let n = xs.len();
    let mut k = cfg.window_size(n);
    loop {
        let (lo, hi) = window_around(xs, t0, k);
        let dmax = (t0 - xs[lo]).abs().max((xs[hi - 1] - t0).abs());
        let weights: Vec<T> = (lo..hi)
            .map(|j| {
                let kernel = if dmax == T::zero() {
                    T::one()
                } else {
                    tricube((xs[j] - t0).abs() / dmax)
                };
                kernel * robust_w[j]
            })
            .collect();
        let positive = weights.iter().filter(|w| **w > T::zero()).count();
        if positive >= cfg.degree + 1 || k == n {
            return fit_window(xs, ys, &weights, lo, hi, cfg.degree, t0);
        }
        // Too many neighbors were rejected: widen to the minimum viable size.
        k += 1;
    }
}

fn validate_inputs<T: Real>(xs: &[T], ys: &[T], what: &'static str) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::ShapeMismatch {
            what,
            details: format!("{} abscissae vs {} responses", xs.len(), ys.len()),
        });
    }
    if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what });
    }
    if xs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter {
            name: "x",
            reason: "abscissae must be strictly increasing".to_string(),
        });
    }
    Ok(())
}

/// Robustness weights from residuals, bisquare on `r / (6 median|r|)`.
///
/// The scale is floored at a small fraction of the response magnitude so
/// that an essentially exact fit (residuals at roundoff level) keeps every
/// point instead of rejecting all but the bitwise-exact ones.
fn robustness_weights<T: Real>(residuals: &[T], response_scale: T) -> Result<Vec<T>> {
    let abs: Vec<T> = residuals.iter().map(|r| r.abs()).collect();
    let s = (T::of(6.0) * median(&abs)?).max(T::of(1e-9) * response_scale);
    let unit = Bisquare::new(T::one())?;
    Ok(residuals
        .iter()
        .map(|&r| {
            if s == T::zero() {
                T::one()
            } else {
                unit.weight_unchecked(r / s)
            }
        })
        .collect())
}

fn robust_fit<T: Real>(xs: &[T], ys: &[T], cfg: &LoessConfig<T>) -> Result<(Vec<T>, Vec<T>)> {
    let n = xs.len();
    let response_scale = ys.iter().fold(T::zero(), |a, y| a.max(y.abs()));
    let mut robust_w = vec![T::one(); n];
    let mut fitted: Vec<T> = Vec::new();
    for iter in 0..=cfg.robust_iterations {
        fitted = xs.iter().map(|&t| loess_at(xs, ys, &robust_w, cfg, t)).collect();
        if iter == cfg.robust_iterations {
            break;
        }
        let residuals: Vec<T> = ys.iter().zip(&fitted).map(|(&y, &f)| y - f).collect();
        robust_w = robustness_weights(&residuals, response_scale)?;
    }
    Ok((fitted, robust_w))
}

/// Robust loess smoothing evaluated at the data abscissae.
///
/// Local weighted polynomial fits with tricube neighborhood weights,
/// refitted `robust_iterations` times with bisquare weights on the scaled
/// residuals. Neighborhoods with fewer than `degree + 1` positively weighted
/// points are widened until viable.
pub fn robust_loess_1d<T: Real>(xs: &[T], ys: &[T], cfg: &LoessConfig<T>) -> Result<Vec<T>> {
    validate_inputs(xs, ys, "robust_loess_1d")?;
    cfg.validate(xs.len(), "robust_loess_1d")?;
    let (fitted, _) = robust_fit(xs, ys, cfg)?;
    Ok(fitted)
}

/// [`robust_loess_1d`] evaluated at arbitrary points.
///
/// The robustness weights are learned on the data abscissae; evaluation
/// points may lie anywhere (outside the data range the nearest window's
/// polynomial extends linearly).
pub fn robust_loess_1d_at<T: Real>(
    xs: &[T],
    ys: &[T],
    cfg: &LoessConfig<T>,
    eval: &[T],
) -> Result<Vec<T>> {
    validate_inputs(xs, ys, "robust_loess_1d")?;
    cfg.validate(xs.len(), "robust_loess_1d")?;
    if eval.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite {
            what: "loess evaluation points",
        });
    }
    let (_, robust_w) = robust_fit(xs, ys, cfg)?;
    Ok(eval.iter().map(|&t| loess_at(xs, ys, &robust_w, cfg, t)).collect())
}

const LOESS_2D_SPAN: f64 = 0.5;
const LOESS_2D_MIN_ENTRIES: usize = 10;

/// Complete and smooth a partially observed symmetric matrix.
///
/// Fits a local plane in index space at every cell, using tricube weights
/// over the nearest half of the available entries, then mirrors the upper
/// triangle (the availability pattern is symmetric, so this equals averaging
/// with the transpose). Used to fill in pairwise covariance matrices whose
/// entries require a minimum number of overlapping observations.
pub fn loess_2d<T: Real>(values: &Array2<T>, mask: &Array2<bool>) -> Result<Array2<T>> {
    let p = values.nrows();
    if values.ncols() != p || mask.nrows() != p || mask.ncols() != p {
        return Err(Error::ShapeMismatch {
            what: "loess_2d",
            details: format!(
                "values {}x{}, mask {}x{}; both must be square and equal",
                values.nrows(),
                values.ncols(),
                mask.nrows(),
                mask.ncols()
            ),
        });
    }
    let mut entries: Vec<(usize, usize, T)> = Vec::new();
    for i in 0..p {
        for j in 0..p {
            if mask[[i, j]] != mask[[j, i]] {
                return Err(Error::InvalidParameter {
                    name: "mask",
                    reason: format!("availability must be symmetric, differs at ({i}, {j})"),
                });
            }
            if mask[[i, j]] {
                if !values[[i, j]].is_finite() {
                    return Err(Error::NonFinite { what: "loess_2d" });
                }
                entries.push((i, j, values[[i, j]]));
            }
        }
    }
    if entries.len() < LOESS_2D_MIN_ENTRIES {
        return Err(Error::TooFewValues {
            what: "loess_2d available entries",
            needed: LOESS_2D_MIN_ENTRIES,
            got: entries.len(),
        });
    }
    let base_k = ((LOESS_2D_SPAN * entries.len() as f64).ceil() as usize).clamp(4, entries.len());

    let mut out = Array2::<T>::zeros((p, p));
    let mut dist: Vec<(T, usize)> = Vec::with_capacity(entries.len());
    for i in 0..p {
        for j in i..p {
            dist.clear();
            for (idx, &(k, l, _)) in entries.iter().enumerate() {
                let dk = T::of(k as f64 - i as f64);
                let dl = T::of(l as f64 - j as f64);
                dist.push((dk * dk + dl * dl, idx));
            }
            let mut k_used = base_k;
            let value = loop {
                if k_used < dist.len() {
                    dist.select_nth_unstable_by(k_used - 1, |a, b| a.0.partial_cmp(&b.0).unwrap());
                }
                let selected = &dist[..k_used.min(dist.len())];
                let dmax = selected
                    .iter()
                    .map(|d| d.0)
                    .fold(T::zero(), T::max)
                    .sqrt();
                let fit = fit_plane(&entries, selected, dmax, i, j);
                match fit {
                    Some(v) => break v,
                    None if k_used < dist.len() => k_used += 4,
                    None => {
                        // Last resort: unweighted mean of everything.
                        break entries.iter().map(|e| e.2).sum::<T>()
                            / T::of(entries.len() as f64);
                    }
                }
            };
            out[[i, j]] = value;
            out[[j, i]] = value;
        }
    }
    Ok(out)
}

/// Tricube-weighted plane fit at `(i, j)`; `None` when fewer than three
/// entries carry positive weight or the local design is degenerate.
fn fit_plane<T: Real>(
    entries: &[(usize, usize, T)],
    selected: &[(T, usize)],
    dmax: T,
    i: usize,
    j: usize,
) -> Option<T> {
    let mut a = Array2::<T>::zeros((3, 3));
    let mut b = Array1::<T>::zeros(3);
    let mut positive = 0usize;
    for &(d2, idx) in selected {
        let w = if dmax == T::zero() {
            T::one()
        } else {
            tricube(d2.sqrt() / dmax)
        };
        if w == T::zero() {
            continue;
        }
        positive += 1;
        let (k, l, v) = entries[idx];
        let u = [
            T::one(),
            T::of(k as f64 - i as f64),
            T::of(l as f64 - j as f64),
        ];
        for c1 in 0..3 {
            b[c1] += w * u[c1] * v;
            for c2 in c1..3 {
                a[[c1, c2]] += w * u[c1] * u[c2];
            }
        }
    }
    if positive < 3 {
        return None;
    }
    for c1 in 0..3 {
        for c2 in 0..c1 {
            a[[c1, c2]] = a[[c2, c1]];
        }
    }
    linalg::solve_spd(&a, &b, "loess_2d plane").ok().map(|sol| sol[0])
}
