//! Robust univariate and regression kernels.
//!
//! ## Purpose
//! Bounded-influence building blocks shared by both estimators: the bisquare
//! rho/psi/weight family, M-estimators of location and scale, the tau and Qn
//! scale estimators, the Gnanadesikan-Kettenring pairwise covariance, and two
//! small robust regressions (L1 and a bisquare-weighted M-regression).
//!
//! ## Conventions
//! * rho is normalized to `[0, 1]` with `rho(t) = 1 - (1 - (t/c)^2)^3` inside
//!   `[-c, c]` and 1 outside.
//! * psi is `t (1 - (t/c)^2)^2`, i.e. `rho' * c^2 / 6`; the constant factor is
//!   fixed crate-wide so `weight(t) = psi(t)/t` lands in `[0, 1]`.
//! * MAD is normalized by 1.4826 wherever it seeds an M-iteration.
//!
//! ## Invariants
//! * Scale estimators are scale-equivariant and translation-invariant.
//! * IRLS loops never increase their objective (checked in debug builds).

use std::sync::OnceLock;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Real;

/// Normalized MAD constant for Gaussian consistency.
pub const MAD_NORMALIZATION: f64 = 1.4826;

/// Default bisquare tuning constant for the location M-estimator
/// (95% Gaussian efficiency).
pub const LOCATION_TUNING: f64 = 4.685;

/// M-scale tuning pair: 50% breakdown at the Gaussian.
pub const M_SCALE_TUNING: f64 = 1.548;
pub const M_SCALE_DELTA: f64 = 0.5;

/// Second tuning constant of the tau scale.
pub const TAU_SECOND_TUNING: f64 = 6.08;

/// Asymptotic consistency factor of the Qn estimator at the Gaussian.
pub const QN_CONSISTENCY: f64 = 2.2219;

// ---------------------------------------------------------------------------
// Bisquare family
// ---------------------------------------------------------------------------

/// Bisquare (Tukey biweight) family with tuning constant `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bisquare<T> {
    c: T,
}

impl<T: Real> Bisquare<T> {
    pub fn new(c: T) -> Result<Self> {
        if !(c.is_finite() && c > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "c",
                reason: format!("tuning constant must be finite and positive, got {c}"),
            });
        }
        Ok(Self { c })
    }

    pub fn tuning(&self) -> T {
        self.c
    }

    /// Normalized loss: 0 at the origin, 1 outside `[-c, c]`.
    pub fn rho(&self, t: T) -> Result<T> {
        if !t.is_finite() {
            return Err(Error::NonFinite { what: "bisquare rho" });
        }
        Ok(self.rho_unchecked(t))
    }

    #[inline]
    pub(crate) fn rho_unchecked(&self, t: T) -> T {
        let u = t / self.c;
        if u.abs() >= T::one() {
            T::one()
        } else {
            let w = T::one() - u * u;
            T::one() - w * w * w
        }
    }

    /// Score function `t (1 - (t/c)^2)^2`, proportional to `rho'`.
    pub fn psi(&self, t: T) -> Result<T> {
        if !t.is_finite() {
            return Err(Error::NonFinite { what: "bisquare psi" });
        }
        Ok(self.psi_unchecked(t))
    }

    #[inline]
    pub(crate) fn psi_unchecked(&self, t: T) -> T {
        let u = t / self.c;
        if u.abs() >= T::one() {
            T::zero()
        } else {
            let w = T::one() - u * u;
            t * w * w
        }
    }

    /// IRLS weight `psi(t)/t`, continuously extended to 1 at the origin.
    pub fn weight(&self, t: T) -> Result<T> {
        if !t.is_finite() {
            return Err(Error::NonFinite {
                what: "bisquare weight",
            });
        }
        Ok(self.weight_unchecked(t))
    }

    #[inline]
    pub(crate) fn weight_unchecked(&self, t: T) -> T {
        let u = t / self.c;
        if u.abs() >= T::one() {
            T::zero()
        } else {
            let w = T::one() - u * u;
            w * w
        }
    }
}

/// Loss family used by the fitting criterion: bisquare, or the squared loss
/// that reduces every estimator in this crate to its classical counterpart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossFamily<T> {
    Bisquare(Bisquare<T>),
    /// `rho(t) = t^2`, `psi(t) = t`, unit weights.
    Quadratic,
}

impl<T: Real> LossFamily<T> {
    pub fn bisquare(c: T) -> Result<Self> {
        Ok(LossFamily::Bisquare(Bisquare::new(c)?))
    }

    #[inline]
    pub fn rho(&self, t: T) -> T {
        match self {
            LossFamily::Bisquare(b) => b.rho_unchecked(t),
            LossFamily::Quadratic => t * t,
        }
    }

    #[inline]
    pub fn weight(&self, t: T) -> T {
        match self {
            LossFamily::Bisquare(b) => b.weight_unchecked(t),
            LossFamily::Quadratic => T::one(),
        }
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self, LossFamily::Quadratic)
    }
}

// ---------------------------------------------------------------------------
// Order statistics helpers
// ---------------------------------------------------------------------------

fn check_finite<T: Real>(xs: &[T], what: &'static str) -> Result<()> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { what });
    }
    Ok(())
}

/// Median of a non-empty sample (average of the two middle order statistics
/// for even lengths).
pub fn median<T: Real>(xs: &[T]) -> Result<T> {
    if xs.is_empty() {
        return Err(Error::EmptySample { what: "median" });
    }
    check_finite(xs, "median")?;
    let mut v = xs.to_vec();
    let n = v.len();
    let mid = n / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap());
    let hi = *m;
    if n % 2 == 1 {
        Ok(hi)
    } else {
        let lo = v[..mid]
            .iter()
            .copied()
            .fold(T::neg_infinity(), T::max);
        Ok((lo + hi) * T::of(0.5))
    }
}

/// Raw (unnormalized) median absolute deviation about the median.
pub fn mad_raw<T: Real>(xs: &[T]) -> Result<T> {
    let m = median(xs)?;
    let dev: Vec<T> = xs.iter().map(|&x| (x - m).abs()).collect();
    median(&dev)
}

/// Normalized MAD: `1.4826 * median(|x - median(x)|)`.
pub fn mad<T: Real>(xs: &[T]) -> Result<T> {
    Ok(T::of(MAD_NORMALIZATION) * mad_raw(xs)?)
}

/// Weighted median of `values` with non-negative `weights`.
///
/// Returns the midpoint of the two adjacent values when the cumulative weight
/// hits exactly half of the total, matching the even-length median convention.
pub fn weighted_median<T: Real>(values: &[T], weights: &[T]) -> Result<T> {
    if values.is_empty() {
        return Err(Error::EmptySample {
            what: "weighted_median",
        });
    }
    if values.len() != weights.len() {
        return Err(Error::ShapeMismatch {
            what: "weighted_median",
            details: format!("{} values vs {} weights", values.len(), weights.len()),
        });
    }
    check_finite(values, "weighted_median")?;
    check_finite(weights, "weighted_median")?;
    if weights.iter().any(|w| *w < T::zero()) {
        return Err(Error::InvalidParameter {
            name: "weights",
            reason: "negative weight".to_string(),
        });
    }
    let total: T = weights.iter().copied().sum();
    if total <= T::zero() {
        return Err(Error::InvalidParameter {
            name: "weights",
            reason: "all weights are zero".to_string(),
        });
    }
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    let half = total * T::of(0.5);
    let mut acc = T::zero();
    for (pos, &i) in idx.iter().enumerate() {
        if weights[i] == T::zero() {
            continue;
        }
        acc += weights[i];
        if acc > half {
            return Ok(values[i]);
        }
        if acc == half {
            // Exactly half of the mass is at or below values[i]: any point up
            // to the next weighted value minimizes; take the midpoint.
            for &j in &idx[pos + 1..] {
                if weights[j] > T::zero() {
                    return Ok((values[i] + values[j]) * T::of(0.5));
                }
            }
            return Ok(values[i]);
        }
    }
    Ok(values[*idx.last().unwrap()])
}

// ---------------------------------------------------------------------------
// Location and scale M-estimators
// ---------------------------------------------------------------------------

/// Result of a robust scale computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustScale<T> {
    pub value: T,
    pub n_used: usize,
}

/// Bisquare location M-estimator.
///
/// Solves `sum psi((x_i - m)/s) = 0` with `s` the normalized MAD, iterating
/// weighted means from the median. Returns the median outright when the MAD
/// is zero.
pub fn m_location<T: Real>(xs: &[T]) -> Result<T> {
    m_location_with(xs, T::of(LOCATION_TUNING))
}

/// [`m_location`] with an explicit tuning constant.
pub fn m_location_with<T: Real>(xs: &[T], c: T) -> Result<T> {
    if xs.is_empty() {
        return Err(Error::EmptySample { what: "m_location" });
    }
    check_finite(xs, "m_location")?;
    let kernel = Bisquare::new(c)?;
    let med = median(xs)?;
    let s = mad(xs)?;
    if s == T::zero() {
        return Ok(med);
    }
    let mut m = med;
    let tol = T::of(1e-12) * s;
    for _ in 0..200 {
        let mut num = T::zero();
        let mut den = T::zero();
        for &x in xs {
            let w = kernel.weight_unchecked((x - m) / s);
            num += w * x;
            den += w;
        }
        if den == T::zero() {
            // All points rejected (cannot happen starting from the median,
            // kept as a guard): fall back to the median.
            return Ok(med);
        }
        let next = num / den;
        let delta = (next - m).abs();
        m = next;
        if delta <= tol {
            break;
        }
    }
    Ok(m)
}

/// M-scale about zero: solves `mean(rho(x_i / s)) = delta`.
///
/// This is the raw primitive used on residuals and residual norms. It is
/// scale-equivariant but not translation-invariant; [`m_scale`] centers first.
pub fn m_scale_about_zero<T: Real>(xs: &[T], delta: T, c: T) -> Result<RobustScale<T>> {
    if xs.is_empty() {
        return Err(Error::EmptySample { what: "m_scale" });
    }
    check_finite(xs, "m_scale")?;
    if !(delta > T::zero() && delta < T::one()) {
        return Err(Error::InvalidParameter {
            name: "delta",
            reason: format!("must lie in (0, 1), got {delta}"),
        });
    }
    let kernel = Bisquare::new(c)?;
    let n = xs.len();
    let nonzero = xs.iter().filter(|x| **x != T::zero()).count();
    // A positive solution exists only when the non-zero fraction exceeds delta.
    if T::of(nonzero as f64) <= delta * T::of(n as f64) {
        return Ok(RobustScale {
            value: T::zero(),
            n_used: n,
        });
    }
    let mean_rho = |s: T| -> T {
        xs.iter().map(|&x| kernel.rho_unchecked(x / s)).sum::<T>() / T::of(n as f64)
    };
    // Bracket the root of mean_rho(s) - delta, which is non-increasing in s.
    let max_abs = xs.iter().fold(T::zero(), |acc, x| acc.max(x.abs()));
    let mut lo = max_abs * T::of(1e-12);
    if mean_rho(lo) < delta {
        lo = xs
            .iter()
            .filter(|x| **x != T::zero())
            .fold(T::infinity(), |acc, x| acc.min(x.abs()))
            / c
            * T::of(0.5);
    }
    let mut hi = max_abs / c * T::of(2.0);
    for _ in 0..200 {
        if mean_rho(hi) < delta {
            break;
        }
        hi = hi * T::of(2.0);
    }
    for _ in 0..120 {
        let mid = (lo + hi) * T::of(0.5);
        if mean_rho(mid) >= delta {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= T::epsilon() * hi {
            break;
        }
    }
    Ok(RobustScale {
        value: (lo + hi) * T::of(0.5),
        n_used: n,
    })
}

/// Bisquare M-scale of a sample, centered at the median.
///
/// Solves `mean(rho((x_i - med)/s)) = delta` by bisection. Returns zero
/// (flagged by the value itself, not an error) when more than `(1-delta) n`
/// of the centered values are exactly zero.
pub fn m_scale<T: Real>(xs: &[T], delta: T, c: T) -> Result<RobustScale<T>> {
    if xs.is_empty() {
        return Err(Error::EmptySample { what: "m_scale" });
    }
    check_finite(xs, "m_scale")?;
    let med = median(xs)?;
    let centered: Vec<T> = xs.iter().map(|&x| x - med).collect();
    m_scale_about_zero(&centered, delta, c)
}

/// Expectation of `rho_c(Z/s)` for standard normal `Z`, computed by Simpson
/// quadrature on `[0, c*s]` (outside that range rho is exactly 1).
fn gaussian_rho_mean(c: f64, s: f64) -> f64 {
    let upper = c * s;
    let steps = 4096usize;
    let h = upper / steps as f64;
    let density = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let rho = |z: f64| {
        let u = z / (c * s);
        let w = 1.0 - u * u;
        1.0 - w * w * w
    };
    // E rho = 1 + 2 * integral_0^{cs} (rho(z) - 1) phi(z) dz
    let f = |z: f64| (rho(z) - 1.0) * density(z);
    let mut acc = f(0.0) + f(upper);
    for k in 1..steps {
        let z = h * k as f64;
        acc += f(z) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 + 2.0 * acc * h / 3.0
}

/// Gaussian consistency constant for the tau scale, computed once.
fn tau_consistency() -> f64 {
    static KAPPA: OnceLock<f64> = OnceLock::new();
    *KAPPA.get_or_init(|| {
        // s_inf: asymptotic M-scale at the standard normal.
        let (mut lo, mut hi) = (0.5_f64, 2.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gaussian_rho_mean(M_SCALE_TUNING, mid) >= M_SCALE_DELTA {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s_inf = 0.5 * (lo + hi);
        let e_rho2 = gaussian_rho_mean(TAU_SECOND_TUNING, s_inf);
        1.0 / (s_inf * s_inf * e_rho2)
    })
}

/// Tau scale: an efficient robust scale built on the 50%-breakdown M-scale.
///
/// `tau^2 = s_M^2 * mean(rho_2(x_c / s_M)) * kappa` with `x_c` the sample
/// centered at its median, `s_M` the bisquare M-scale (c = 1.548, delta = 0.5),
/// `rho_2` the bisquare loss with c = 6.08, and `kappa` the numerically
/// computed Gaussian consistency constant.
pub fn tau_scale<T: Real>(xs: &[T]) -> Result<RobustScale<T>> {
    if xs.is_empty() {
        return Err(Error::EmptySample { what: "tau_scale" });
    }
    check_finite(xs, "tau_scale")?;
    let med = median(xs)?;
    let centered: Vec<T> = xs.iter().map(|&x| x - med).collect();
    let s_m = m_scale_about_zero(&centered, T::of(M_SCALE_DELTA), T::of(M_SCALE_TUNING))?;
    if s_m.value == T::zero() {
        return Ok(RobustScale {
            value: T::zero(),
            n_used: xs.len(),
        });
    }
    let rho2 = Bisquare::new(T::of(TAU_SECOND_TUNING))?;
    let mean_rho2 = centered
        .iter()
        .map(|&x| rho2.rho_unchecked(x / s_m.value))
        .sum::<T>()
        / T::of(xs.len() as f64);
    let tau2 = s_m.value * s_m.value * mean_rho2 * T::of(tau_consistency());
    Ok(RobustScale {
        value: tau2.sqrt(),
        n_used: xs.len(),
    })
}

// ---------------------------------------------------------------------------
// Qn scale and pairwise covariance
// ---------------------------------------------------------------------------

/// Finite-sample correction factors for Qn (n = 2..=9), then the asymptotic
/// n/(n + 1.4) (odd) or n/(n + 3.8) (even) formulas.
fn qn_small_sample_factor(n: usize) -> f64 {
    match n {
        2 => 0.399,
        3 => 0.994,
        4 => 0.512,
        5 => 0.844,
        6 => 0.611,
        7 => 0.857,
        8 => 0.669,
        9 => 0.872,
        _ => {
            let nf = n as f64;
            if n % 2 == 1 {
                nf / (nf + 1.4)
            } else {
                nf / (nf + 3.8)
            }
        }
    }
}

/// Raw Qn: the k-th order statistic of the pairwise absolute differences,
/// with `k = h(h-1)/2` and `h = floor(n/2) + 1`.
pub fn qn_scale_raw<T: Real>(xs: &[T]) -> Result<T> {
    let n = xs.len();
    if n < 2 {
        return Err(Error::TooFewValues {
            what: "qn_scale",
            needed: 2,
            got: n,
        });
    }
    check_finite(xs, "qn_scale")?;
    let h = n / 2 + 1;
    let k = h * (h - 1) / 2;
    let mut diffs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            diffs.push((xs[i] - xs[j]).abs());
        }
    }
    let (_, kth, _) = diffs.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
    Ok(*kth)
}

/// Qn scale estimator with Gaussian consistency and finite-sample correction.
pub fn qn_scale<T: Real>(xs: &[T]) -> Result<RobustScale<T>> {
    let raw = qn_scale_raw(xs)?;
    let factor = T::of(QN_CONSISTENCY) * T::of(qn_small_sample_factor(xs.len()));
    Ok(RobustScale {
        value: raw * factor,
        n_used: xs.len(),
    })
}

/// Dispersion estimator used inside the pairwise covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dispersion {
    Qn,
    Tau,
}

impl Dispersion {
    /// Evaluate the chosen dispersion estimator.
    pub fn apply<T: Real>(self, xs: &[T]) -> Result<T> {
        match self {
            Dispersion::Qn => Ok(qn_scale(xs)?.value),
            Dispersion::Tau => Ok(tau_scale(xs)?.value),
        }
    }
}

/// Gnanadesikan-Kettenring pairwise covariance:
/// `cov(x, y) = (S(x+y)^2 - S(x-y)^2) / 4`.
///
/// Returns `None` when fewer than 3 paired observations are available, which
/// callers treat as a missing entry rather than an error.
pub fn gk_covariance<T: Real>(xs: &[T], ys: &[T], dispersion: Dispersion) -> Result<Option<T>> {
    if xs.len() != ys.len() {
        return Err(Error::ShapeMismatch {
            what: "gk_covariance",
            details: format!("{} vs {} observations", xs.len(), ys.len()),
        });
    }
    if xs.len() < 3 {
        return Ok(None);
    }
    check_finite(xs, "gk_covariance")?;
    check_finite(ys, "gk_covariance")?;
    let sums: Vec<T> = xs.iter().zip(ys).map(|(&x, &y)| x + y).collect();
    let diffs: Vec<T> = xs.iter().zip(ys).map(|(&x, &y)| x - y).collect();
    let s_plus = dispersion.apply(&sums)?;
    let s_minus = dispersion.apply(&diffs)?;
    Ok(Some(
        (s_plus * s_plus - s_minus * s_minus) * T::of(0.25),
    ))
}

// ---------------------------------------------------------------------------
// Robust regressions
// ---------------------------------------------------------------------------

const L1_RESIDUAL_FLOOR: f64 = 1e-9;

fn null_direction_of<T: Real>(gram: &Array2<T>) -> Vec<f64> {
    match linalg::sym_eigen(gram) {
        Ok(e) => {
            let q = gram.nrows();
            (0..q).map(|i| e.vectors[[i, q - 1]].as_f64()).collect()
        }
        Err(_) => vec![f64::NAN; gram.nrows()],
    }
}

fn check_design<T: Real>(design: &Array2<T>, ys: &[T], what: &'static str) -> Result<()> {
    if design.nrows() != ys.len() {
        return Err(Error::ShapeMismatch {
            what,
            details: format!("{} rows vs {} responses", design.nrows(), ys.len()),
        });
    }
    if design.ncols() == 0 || design.nrows() < design.ncols() {
        return Err(Error::TooFewValues {
            what,
            needed: design.ncols().max(1),
            got: design.nrows(),
        });
    }
    if design.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { what });
    }
    check_finite(ys, what)
}

/// Least-absolute-deviations regression without intercept.
///
/// A single column is solved exactly as a weighted median of the ratios
/// `y_i / d_i` with weights `|d_i|`; several columns run IRLS with the
/// residual magnitudes floored at 1e-9.
pub fn l1_regression<T: Real>(design: &Array2<T>, ys: &[T]) -> Result<Array1<T>> {
    check_design(design, ys, "l1_regression")?;
    let q = design.ncols();

    if q == 1 {
        let mut ratios = Vec::new();
        let mut weights = Vec::new();
        for (i, &y) in ys.iter().enumerate() {
            let d = design[[i, 0]];
            if d != T::zero() {
                ratios.push(y / d);
                weights.push(d.abs());
            }
        }
        if ratios.is_empty() {
            return Err(Error::RankDeficient {
                null_direction: vec![1.0],
            });
        }
        let b = weighted_median(&ratios, &weights)?;
        return Ok(Array1::from_elem(1, b));
    }

    // Rank check once on the unweighted Gram matrix.
    let gram = design.t().dot(design);
    let scale = (0..q).fold(T::zero(), |acc, i| acc.max(gram[[i, i]].abs()));
    let eig = linalg::sym_eigen(&gram)?;
    if eig.values[q - 1] <= T::epsilon() * scale * T::of(q as f64) {
        return Err(Error::RankDeficient {
            null_direction: null_direction_of(&gram),
        });
    }

    let n = ys.len();
    let y = Array1::from(ys.to_vec());
    let mut beta = linalg::solve_spd(&gram, &design.t().dot(&y), "l1_regression")?;
    let resid_scale = ys.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    let floor = T::of(L1_RESIDUAL_FLOOR) * resid_scale.max(T::one());
    for _ in 0..200 {
        let fitted = design.dot(&beta);
        let mut a = Array2::<T>::zeros((q, q));
        let mut b = Array1::<T>::zeros(q);
        for i in 0..n {
            let r = (y[i] - fitted[i]).abs().max(floor);
            let w = r.recip();
            for c1 in 0..q {
                b[c1] += w * design[[i, c1]] * y[i];
                for c2 in c1..q {
                    a[[c1, c2]] += w * design[[i, c1]] * design[[i, c2]];
                }
            }
        }
        for c1 in 0..q {
            for c2 in 0..c1 {
                a[[c1, c2]] = a[[c2, c1]];
            }
        }
        let next = linalg::solve_spd(&a, &b, "l1_regression")?;
        let change = (0..q)
            .map(|c| (next[c] - beta[c]).abs())
            .fold(T::zero(), T::max);
        let size = (0..q).map(|c| next[c].abs()).fold(T::zero(), T::max);
        beta = next;
        if change <= T::of(1e-10) * (size + T::one()) {
            break;
        }
    }
    Ok(beta)
}

/// Outcome of the bisquare regression M-estimator.
#[derive(Debug, Clone)]
pub struct MRegression<T> {
    pub coefficients: Array1<T>,
    /// Objective `sum rho(r_i / s_hat)` per IRLS step, non-increasing.
    pub objective_trace: Vec<T>,
}

/// Bisquare regression M-estimator without intercept.
///
/// Starts from `init` (callers usually pass the L1 fit), fixes the residual
/// scale at the normalized MAD of the initial residuals, and iterates
/// weighted least squares until the coefficients move by less than 1e-8
/// (relative) or 100 iterations. If the initial MAD is zero the initial
/// coefficients are returned unchanged.
pub fn bisquare_regression_m<T: Real>(
    design: &Array2<T>,
    ys: &[T],
    c: T,
    init: &Array1<T>,
) -> Result<MRegression<T>> {
    check_design(design, ys, "bisquare_regression_m")?;
    let q = design.ncols();
    if init.len() != q {
        return Err(Error::ShapeMismatch {
            what: "bisquare_regression_m",
            details: format!("{} initial coefficients for {} columns", init.len(), q),
        });
    }
    let kernel = Bisquare::new(c)?;
    let n = ys.len();
    let y = Array1::from(ys.to_vec());

    let resid0: Vec<T> = {
        let fitted = design.dot(init);
        (0..n).map(|i| y[i] - fitted[i]).collect()
    };
    let s = mad(&resid0)?;
    if s == T::zero() {
        return Ok(MRegression {
            coefficients: init.clone(),
            objective_trace: Vec::new(),
        });
    }

    let objective = |beta: &Array1<T>| -> T {
        let fitted = design.dot(beta);
        (0..n)
            .map(|i| kernel.rho_unchecked((y[i] - fitted[i]) / s))
            .sum()
    };

    let mut beta = init.clone();
    let mut trace = vec![objective(&beta)];
    for _ in 0..100 {
        let fitted = design.dot(&beta);
        let mut a = Array2::<T>::zeros((q, q));
        let mut b = Array1::<T>::zeros(q);
        let mut any_weight = false;
        for i in 0..n {
            let w = kernel.weight_unchecked((y[i] - fitted[i]) / s);
            if w == T::zero() {
                continue;
            }
            any_weight = true;
            for c1 in 0..q {
                b[c1] += w * design[[i, c1]] * y[i];
                for c2 in c1..q {
                    a[[c1, c2]] += w * design[[i, c1]] * design[[i, c2]];
                }
            }
        }
        if !any_weight {
            break;
        }
        for c1 in 0..q {
            for c2 in 0..c1 {
                a[[c1, c2]] = a[[c2, c1]];
            }
        }
        let next = match linalg::solve_spd(&a, &b, "bisquare_regression_m") {
            Ok(v) => v,
            // Weighted design lost rank (all weight on degenerate rows):
            // keep the current iterate.
            Err(_) => break,
        };
        let obj = objective(&next);
        // Each step minimizes the weighted quadratic majorizer, so the
        // objective cannot increase in exact arithmetic. A rise therefore
        // signals a numerically degenerate solve (near-zero scale or a
        // barely full-rank weighted design); keep the current iterate.
        if obj > *trace.last().unwrap() + T::of(1e-10) * (T::one() + trace[0].abs()) {
            break;
        }
        let change = (0..q)
            .map(|k| (next[k] - beta[k]).abs())
            .fold(T::zero(), T::max);
        let size = (0..q).map(|k| next[k].abs()).fold(T::zero(), T::max);
        beta = next;
        trace.push(obj);
        if change <= T::of(1e-8) * (size + T::one()) {
            break;
        }
    }
    Ok(MRegression {
        coefficients: beta,
        objective_trace: trace,
    })
}
