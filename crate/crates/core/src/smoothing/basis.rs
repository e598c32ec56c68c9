//! B-spline bases over an observation grid.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Real;

/// Default divisor for the interior-knot count: `p / 6` knots on `p` points.
pub const DEFAULT_KNOT_DIVISOR: usize = 6;

/// A clamped B-spline basis evaluated over a fixed grid.
///
/// The basis has `m = interior_knots + degree + 1` functions. Rows of
/// [`matrix`](Self::matrix) hold the basis evaluated at the grid points;
/// [`eval`](Self::eval) evaluates at arbitrary points inside the knot span
/// (extrapolation is an error).
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis<T> {
    degree: usize,
    /// Full clamped knot vector of length `m + degree + 1`.
    knots: Vec<T>,
    m: usize,
    grid: Vec<T>,
    b: Array2<T>,
}

fn check_grid<T: Real>(grid: &[T], degree: usize) -> Result<()> {
    if grid.len() < degree + 2 {
        return Err(Error::TooFewValues {
            what: "spline grid",
            needed: degree + 2,
            got: grid.len(),
        });
    }
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite { what: "spline grid" });
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter {
            name: "grid",
            reason: "grid points must be strictly increasing".to_string(),
        });
    }
    Ok(())
}

/// Type-7 quantile of a sorted slice.
fn quantile_sorted<T: Real>(sorted: &[T], q: f64) -> T {
    let n = sorted.len();
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = T::of(h - lo as f64);
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

impl<T: Real> SplineBasis<T> {
    /// Basis with an explicit number of interior knots, placed at equally
    /// spaced quantiles of the grid. Zero interior knots yields the
    /// Bernstein polynomials of the given degree.
    pub fn with_interior_knots(grid: &[T], interior: usize, degree: usize) -> Result<Self> {
        check_grid(grid, degree)?;
        if degree == 0 {
            return Err(Error::InvalidParameter {
                name: "degree",
                reason: "spline degree must be at least 1".to_string(),
            });
        }
        let p = grid.len();
        let m = interior + degree + 1;
        let t_min = grid[0];
        let t_max = grid[p - 1];
        let mut knots = Vec::with_capacity(m + degree + 1);
        knots.extend(std::iter::repeat(t_min).take(degree + 1));
        for i in 1..=interior {
            knots.push(quantile_sorted(grid, i as f64 / (interior + 1) as f64));
        }
        knots.extend(std::iter::repeat(t_max).take(degree + 1));
        Self::from_knot_vector(knots, degree, grid)
    }

    /// Rebuild a basis from a stored knot vector (as serialized in a fitted
    /// model) and re-evaluate it over `grid`.
    pub fn from_knot_vector(knots: Vec<T>, degree: usize, grid: &[T]) -> Result<Self> {
        if knots.len() < 2 * (degree + 1) {
            return Err(Error::TooFewValues {
                what: "knot vector",
                needed: 2 * (degree + 1),
                got: knots.len(),
            });
        }
        if knots.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite { what: "knot vector" });
        }
        if knots.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidParameter {
                name: "knots",
                reason: "knot vector must be nondecreasing".to_string(),
            });
        }
        let m = knots.len() - degree - 1;
        let mut basis = Self {
            degree,
            knots,
            m,
            grid: grid.to_vec(),
            b: Array2::zeros((0, 0)),
        };
        basis.b = basis.eval_matrix(grid)?;
        Ok(basis)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of basis functions.
    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    pub fn interior_knots(&self) -> &[T] {
        &self.knots[self.degree + 1..self.m]
    }

    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    /// Basis evaluated at the grid: `p x m`, row `j` = basis at `grid[j]`.
    pub fn matrix(&self) -> &Array2<T> {
        &self.b
    }

    /// Closed evaluation span `[t_min, t_max]`.
    pub fn span(&self) -> (T, T) {
        (self.knots[self.degree], self.knots[self.m])
    }

    fn find_span(&self, t: T) -> Result<usize> {
        let (t_min, t_max) = self.span();
        if !(t >= t_min && t <= t_max) {
            return Err(Error::InvalidParameter {
                name: "t",
                reason: format!("{t} lies outside the knot span [{t_min}, {t_max}]; extrapolation is not supported"),
            });
        }
        if t == t_max {
            let mut i = self.m - 1;
            while i > self.degree && self.knots[i] == t_max {
                i -= 1;
            }
            return Ok(i);
        }
        let (mut lo, mut hi) = (self.degree, self.m - 1);
        while lo < hi {
            let mid = (lo + hi + 1) / 2;
            if self.knots[mid] <= t {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        Ok(lo)
    }

    /// Evaluate all basis functions at `t` (de Boor's recurrence).
    ///
    /// The returned vector has length `m`, is componentwise non-negative,
    /// sums to one, and has at most `degree + 1` nonzero entries.
    pub fn eval(&self, t: T) -> Result<Array1<T>> {
        if !t.is_finite() {
            return Err(Error::NonFinite { what: "basis evaluation point" });
        }
        let span = self.find_span(t)?;
        let d = self.degree;
        let mut vals = vec![T::zero(); d + 1];
        let mut left = vec![T::zero(); d + 1];
        let mut right = vec![T::zero(); d + 1];
        vals[0] = T::one();
        for j in 1..=d {
            left[j] = t - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - t;
            let mut saved = T::zero();
            for r in 0..j {
                let tmp = vals[r] / (right[r + 1] + left[j - r]);
                vals[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            vals[j] = saved;
        }
        let mut out = Array1::zeros(self.m);
        for (r, &v) in vals.iter().enumerate() {
            out[span - d + r] = v;
        }
        Ok(out)
    }

    /// Evaluate the basis at each point of `ts`, one row per point.
    pub fn eval_matrix(&self, ts: &[T]) -> Result<Array2<T>> {
        let mut b = Array2::zeros((ts.len(), self.m));
        for (j, &t) in ts.iter().enumerate() {
            let row = self.eval(t)?;
            b.row_mut(j).assign(&row);
        }
        Ok(b)
    }
}

/// Cubic B-spline basis with `floor(p / knot_divisor)` interior knots.
///
/// Errors when the divisor leaves no interior knots; pass a smaller divisor
/// or use [`SplineBasis::with_interior_knots`] directly for a knot-free
/// (Bernstein) basis.
pub fn make_basis<T: Real>(grid: &[T], knot_divisor: usize) -> Result<SplineBasis<T>> {
    if knot_divisor == 0 {
        return Err(Error::InvalidParameter {
            name: "knot_divisor",
            reason: "divisor must be positive".to_string(),
        });
    }
    let interior = grid.len() / knot_divisor;
    if interior == 0 {
        return Err(Error::InvalidParameter {
            name: "knot_divisor",
            reason: format!(
                "floor({} / {knot_divisor}) = 0 interior knots; use a smaller divisor or more grid points",
                grid.len()
            ),
        });
    }
    SplineBasis::with_interior_knots(grid, interior, 3)
}

/// Least-squares projection of a grid vector onto the basis.
///
/// Returns the basis coefficients and the smoothed vector `B * coefficients`.
/// `weights`, when given, must be non-negative and one per grid point.
pub fn smooth_with_basis<T: Real>(
    basis: &SplineBasis<T>,
    v: &[T],
    weights: Option<&[T]>,
) -> Result<(Array1<T>, Array1<T>)> {
    let p = basis.grid.len();
    let m = basis.m;
    if v.len() != p {
        return Err(Error::ShapeMismatch {
            what: "smooth_with_basis",
            details: format!("vector of length {} over a grid of {p} points", v.len()),
        });
    }
    if p < m {
        return Err(Error::TooFewValues {
            what: "smooth_with_basis",
            needed: m,
            got: p,
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            what: "smooth_with_basis",
        });
    }
    if let Some(w) = weights {
        if w.len() != p {
            return Err(Error::ShapeMismatch {
                what: "smooth_with_basis",
                details: format!("{} weights for {p} grid points", w.len()),
            });
        }
        if w.iter().any(|x| !x.is_finite() || *x < T::zero()) {
            return Err(Error::InvalidParameter {
                name: "weights",
                reason: "weights must be finite and non-negative".to_string(),
            });
        }
    }
    let b = &basis.b;
    let mut a = Array2::<T>::zeros((m, m));
    let mut rhs = Array1::<T>::zeros(m);
    for j in 0..p {
        let w = weights.map_or(T::one(), |ws| ws[j]);
        if w == T::zero() {
            continue;
        }
        let row = b.row(j);
        for c1 in 0..m {
            if row[c1] == T::zero() {
                continue;
            }
            let wr = w * row[c1];
            rhs[c1] += wr * v[j];
            for c2 in c1..m {
                a[[c1, c2]] += wr * row[c2];
            }
        }
    }
    for c1 in 0..m {
        for c2 in 0..c1 {
            a[[c1, c2]] = a[[c2, c1]];
        }
    }
    let coefficients = linalg::solve_spd(&a, &rhs, "smooth_with_basis")?;
    let smoothed = b.dot(&coefficients);
    Ok((coefficients, smoothed))
}

/// Choose an interior-knot count by generalized cross-validation.
///
/// Each column of `vectors` is smoothed with a cubic basis for every
/// candidate count; the score is `sum_v (RSS_v / p) / (1 - m/p)^2`, using
/// that the hat-matrix trace of an unweighted full-rank least-squares fit
/// equals the number of basis functions `m`. Ties break toward fewer knots.
pub fn gcv_knot_count<T: Real>(
    grid: &[T],
    vectors: &Array2<T>,
    candidates: &[usize],
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::EmptySample {
            what: "gcv_knot_count candidates",
        });
    }
    let p = grid.len();
    if vectors.nrows() != p {
        return Err(Error::ShapeMismatch {
            what: "gcv_knot_count",
            details: format!("{} rows for a grid of {p} points", vectors.nrows()),
        });
    }
    let mut sorted: Vec<usize> = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let pf = T::of(p as f64);
    let mut best: Option<(T, usize)> = None;
    for &interior in &sorted {
        let m = interior + 4;
        if m > p {
            return Err(Error::InvalidParameter {
                name: "candidates",
                reason: format!("{interior} interior knots need {m} basis functions but the grid has only {p} points"),
            });
        }
        let score = if m == p {
            T::infinity()
        } else {
            let basis = SplineBasis::with_interior_knots(grid, interior, 3)?;
            let mut rss = T::zero();
            for col in vectors.columns() {
                let v: Vec<T> = col.to_vec();
                let (_, smoothed) = smooth_with_basis(&basis, &v, None)?;
                rss += v
                    .iter()
                    .zip(smoothed.iter())
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .sum::<T>();
            }
            let penalty = T::one() - T::of(m as f64) / pf;
            (rss / pf) / (penalty * penalty)
        };
        match best {
            Some((s, _)) if score >= s => {}
            _ => best = Some((score, interior)),
        }
    }
    Ok(best.unwrap().1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn uniform_grid(p: usize) -> Vec<f64> {
        (0..p).map(|j| j as f64 / (p - 1) as f64).collect()
    }

    #[test]
    fn divisor_six_on_fifty_points_gives_eight_knots_and_twelve_functions() {
        let grid = uniform_grid(50);
        let basis = make_basis(&grid, 6).unwrap();
        assert_eq!(basis.interior_knots().len(), 8);
        assert_eq!(basis.len(), 12);
        assert_eq!(basis.matrix().shape(), &[50, 12]);
        // Quantile placement reduces to equal spacing on a uniform grid.
        for (i, &k) in basis.interior_knots().iter().enumerate() {
            let expected = (i + 1) as f64 / 9.0;
            assert!((k - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn divisor_larger_than_grid_is_rejected_with_guidance() {
        let grid = uniform_grid(10);
        match make_basis(&grid, 11) {
            Err(Error::InvalidParameter { reason, .. }) => {
                assert!(reason.contains("smaller divisor"), "{reason}");
            }
            other => panic!("expected an interior-knot error, got {other:?}"),
        }
    }

    #[test]
    fn zero_interior_knots_yield_bernstein_cubics() {
        let grid = uniform_grid(11);
        let basis = SplineBasis::with_interior_knots(&grid, 0, 3).unwrap();
        assert_eq!(basis.len(), 4);
        let at0 = basis.eval(0.0).unwrap();
        for (got, want) in at0.iter().zip([1.0, 0.0, 0.0, 0.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        // Bernstein cubics at 1/2: C(3,k) (1/2)^3 = (1/8, 3/8, 3/8, 1/8).
        let mid = basis.eval(0.5).unwrap();
        for (got, want) in mid.iter().zip([0.125, 0.375, 0.375, 0.125]) {
            assert!((got - want).abs() < 1e-15);
        }
        let at1 = basis.eval(1.0).unwrap();
        for (got, want) in at1.iter().zip([0.0, 0.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn partition_of_unity_and_local_support_at_random_points() {
        // Non-uniform grid to exercise quantile knot placement.
        let grid: Vec<f64> = (0..37).map(|j| (j as f64 / 36.0).powf(1.3) * 5.0).collect();
        let basis = SplineBasis::with_interior_knots(&grid, 5, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let t = rng.random_range(0.0..5.0);
            let v = basis.eval(t).unwrap();
            let sum: f64 = v.sum();
            assert!((sum - 1.0).abs() < 1e-12, "sum at {t} = {sum}");
            assert!(v.iter().all(|&x| x >= 0.0));
            assert!(v.iter().filter(|&&x| x != 0.0).count() <= 4);
        }
    }

    #[test]
    fn grid_evaluations_match_the_stored_matrix_bitwise() {
        let grid = uniform_grid(23);
        let basis = make_basis(&grid, 5).unwrap();
        for (j, &t) in grid.iter().enumerate() {
            let v = basis.eval(t).unwrap();
            for l in 0..basis.len() {
                assert_eq!(v[l], basis.matrix()[[j, l]]);
            }
        }
    }

    #[test]
    fn extrapolation_is_rejected() {
        let grid = uniform_grid(20);
        let basis = make_basis(&grid, 4).unwrap();
        assert!(basis.eval(-1e-9).is_err());
        assert!(basis.eval(1.0 + 1e-9).is_err());
        assert!(basis.eval(f64::NAN).is_err());
        // Endpoints themselves are inside the closed span.
        assert!(basis.eval(0.0).is_ok());
        assert!(basis.eval(1.0).is_ok());
    }

    #[test]
    fn cubic_polynomials_are_reproduced_exactly() {
        let grid = uniform_grid(40);
        let basis = make_basis(&grid, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let coef: Vec<f64> = (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let poly = |t: f64| coef[0] + coef[1] * t + coef[2] * t * t + coef[3] * t * t * t;
        let y: Vec<f64> = grid.iter().map(|&t| poly(t)).collect();
        let (c, smoothed) = smooth_with_basis(&basis, &y, None).unwrap();
        for (s, v) in smoothed.iter().zip(&y) {
            assert!((s - v).abs() < 1e-10);
        }
        // Off-grid evaluation also reproduces the polynomial.
        for _ in 0..200 {
            let t = rng.random_range(0.0..1.0);
            let val = basis.eval(t).unwrap().dot(&c);
            assert!((val - poly(t)).abs() < 1e-10, "at t = {t}");
        }
    }

    #[test]
    fn smoothing_is_an_idempotent_projection() {
        let grid = uniform_grid(30);
        let basis = make_basis(&grid, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);

        // A vector already in the span is reproduced.
        let c0: Array1<f64> =
            Array1::from_iter((0..basis.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let in_span = basis.matrix().dot(&c0);
        let (_, reproduced) = smooth_with_basis(&basis, in_span.as_slice().unwrap(), None).unwrap();
        for (a, b) in reproduced.iter().zip(in_span.iter()) {
            assert!((a - b).abs() < 1e-10);
        }

        // Projection contracts toward the in-span part and is idempotent.
        let noise: Vec<f64> = (0..30).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let v: Vec<f64> = in_span.iter().zip(&noise).map(|(a, b)| a + b).collect();
        let (_, once) = smooth_with_basis(&basis, &v, None).unwrap();
        let dist = |a: &[f64], b: &[f64]| -> f64 {
            a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
        };
        assert!(
            dist(once.as_slice().unwrap(), in_span.as_slice().unwrap())
                <= dist(&v, in_span.as_slice().unwrap())
        );
        let (_, twice) = smooth_with_basis(&basis, once.as_slice().unwrap(), None).unwrap();
        for (a, b) in twice.iter().zip(once.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn coefficients_match_a_dense_normal_equations_oracle() {
        let grid = uniform_grid(25);
        let basis = make_basis(&grid, 6).unwrap();
        let m = basis.len();
        let mut rng = ChaCha8Rng::seed_from_u64(4242);
        let v: Vec<f64> = (0..25).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let (c, _) = smooth_with_basis(&basis, &v, None).unwrap();

        // Oracle: explicit Gauss-Jordan inverse of the Gram matrix.
        let b = basis.matrix();
        let gram = b.t().dot(b);
        let mut aug = Array2::<f64>::zeros((m, 2 * m));
        for i in 0..m {
            for j in 0..m {
                aug[[i, j]] = gram[[i, j]];
            }
            aug[[i, m + i]] = 1.0;
        }
        for col in 0..m {
            let mut piv = col;
            for r in col + 1..m {
                if aug[[r, col]].abs() > aug[[piv, col]].abs() {
                    piv = r;
                }
            }
            for j in 0..2 * m {
                let tmp = aug[[col, j]];
                aug[[col, j]] = aug[[piv, j]];
                aug[[piv, j]] = tmp;
            }
            let d = aug[[col, col]];
            for j in 0..2 * m {
                aug[[col, j]] /= d;
            }
            for r in 0..m {
                if r != col {
                    let f = aug[[r, col]];
                    for j in 0..2 * m {
                        aug[[r, j]] -= f * aug[[col, j]];
                    }
                }
            }
        }
        let vv = Array1::from(v.clone());
        let rhs = b.t().dot(&vv);
        for i in 0..m {
            let oracle: f64 = (0..m).map(|j| aug[[i, m + j]] * rhs[j]).sum();
            assert!((c[i] - oracle).abs() < 1e-8, "coefficient {i}");
        }
    }

    #[test]
    fn unit_weights_match_the_unweighted_fit_and_zero_weights_drop_points() {
        let grid = uniform_grid(30);
        let basis = make_basis(&grid, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v: Vec<f64> = (0..30).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let ones = vec![1.0_f64; 30];
        let (c1, _) = smooth_with_basis(&basis, &v, None).unwrap();
        let (c2, _) = smooth_with_basis(&basis, &v, Some(&ones)).unwrap();
        for (a, b) in c1.iter().zip(c2.iter()) {
            assert!((a - b).abs() < 1e-12);
        }

        // Zeroing out a corrupted point recovers the fit on clean data.
        let mut corrupted = v.clone();
        corrupted[12] += 1e6;
        let mut w = ones.clone();
        w[12] = 0.0;
        let (c3, _) = smooth_with_basis(&basis, &corrupted, Some(&w)).unwrap();
        // Compare against dropping the point entirely is not possible with a
        // fixed grid; instead check the fit is unchanged when the weight is 0.
        let (c4, _) = smooth_with_basis(&basis, &v, Some(&w)).unwrap();
        for (a, b) in c3.iter().zip(c4.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn gcv_prefers_fewer_knots_under_an_exact_fit() {
        let grid = uniform_grid(48);
        let basis4 = SplineBasis::with_interior_knots(&grid, 4, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c: Array1<f64> =
            Array1::from_iter((0..basis4.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let v = basis4.matrix().dot(&c);
        let vectors = v.insert_axis(ndarray::Axis(1));
        let chosen = gcv_knot_count(&grid, &vectors, &[4, 20]).unwrap();
        assert_eq!(chosen, 4);
    }

    #[test]
    fn gcv_picks_the_smallest_candidate_for_white_noise() {
        let grid = uniform_grid(50);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let v: Array1<f64> = Array1::from_iter((0..50).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let vectors = v.insert_axis(ndarray::Axis(1));
        let chosen = gcv_knot_count(&grid, &vectors, &[2, 5, 8, 11]).unwrap();
        assert_eq!(chosen, 2);
    }

    #[test]
    fn gcv_matches_an_exhaustive_hat_matrix_oracle_on_a_noisy_sinusoid() {
        let grid = uniform_grid(50);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let v: Array1<f64> = Array1::from_iter(grid.iter().map(|&t| {
            (3.0 * std::f64::consts::PI * t).sin() + 0.1 * rng.sample::<f64, _>(StandardNormal)
        }));
        let vectors = v.clone().insert_axis(ndarray::Axis(1));
        let candidates = [2usize, 8, 30];
        let chosen = gcv_knot_count(&grid, &vectors, &candidates).unwrap();
        assert_eq!(chosen, 8);

        // Oracle: recompute each score with the hat-matrix trace evaluated
        // from the explicit projector B (B'B)^{-1} B' rather than the
        // full-rank shortcut trace = m.
        let mut best = (f64::INFINITY, 0usize);
        for &k in &candidates {
            let basis = SplineBasis::with_interior_knots(&grid, k, 3).unwrap();
            let b = basis.matrix();
            let m = basis.len();
            let gram = b.t().dot(b);
            let mut trace = 0.0;
            for j in 0..50 {
                let row: Vec<f64> = (0..m).map(|l| b[[j, l]]).collect();
                let sol = crate::linalg::solve_spd(&gram, &Array1::from(row.clone()), "oracle").unwrap();
                trace += row.iter().zip(sol.iter()).map(|(a, s)| a * s).sum::<f64>();
            }
            assert!((trace - m as f64).abs() < 1e-8, "hat trace vs m for k = {k}");
            let (_, smoothed) = smooth_with_basis(&basis, v.as_slice().unwrap(), None).unwrap();
            let rss: f64 = v.iter().zip(smoothed.iter()).map(|(a, s)| (a - s) * (a - s)).sum();
            let score = (rss / 50.0) / (1.0 - trace / 50.0).powi(2);
            if score < best.0 {
                best = (score, k);
            }
        }
        assert_eq!(best.1, chosen);
    }

    #[test]
    fn gcv_rejects_candidates_that_exceed_the_grid() {
        let grid = uniform_grid(12);
        let v = Array2::<f64>::zeros((12, 1));
        assert!(gcv_knot_count(&grid, &v, &[2, 9]).is_err());
    }
}
