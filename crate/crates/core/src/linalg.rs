//! Small dense linear algebra used by the estimators.
//!
//! The matrices in this crate are tiny (basis systems around 12x12, grids of
//! a few dozen points), so simple, deterministic algorithms are preferred:
//! cyclic Jacobi for symmetric eigenproblems, Cholesky for SPD solves, and
//! modified Gram-Schmidt for orthonormalization. Determinism matters because
//! simulation output must be byte-identical across runs and thread counts.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct SymEigen<T> {
    /// Eigenvalues, largest first.
    pub values: Array1<T>,
    /// Eigenvectors as columns, ordered to match `values`.
    pub vectors: Array2<T>,
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// The input is symmetrized as `(A + A^T)/2` before iterating, so callers may
/// pass matrices that are symmetric only up to rounding. Accuracy is near
/// machine precision for the well-conditioned sizes used here.
pub fn sym_eigen<T: Real>(a: &Array2<T>) -> Result<SymEigen<T>> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::ShapeMismatch {
            what: "sym_eigen",
            details: format!("expected square matrix, got {}x{}", a.nrows(), a.ncols()),
        });
    }
    let half = T::of(0.5);
    let mut d = Array2::<T>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            d[[i, j]] = (a[[i, j]] + a[[j, i]]) * half;
            if !d[[i, j]].is_finite() {
                return Err(Error::NonFinite { what: "sym_eigen" });
            }
        }
    }
    let mut v = Array2::<T>::eye(n);

    let frob = d.iter().map(|x| *x * *x).sum::<T>().sqrt();
    if frob == T::zero() {
        return Ok(SymEigen {
            values: Array1::zeros(n),
            vectors: v,
        });
    }
    let tol = T::epsilon() * frob;

    for _sweep in 0..100 {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += d[[p, q]] * d[[p, q]];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = d[[p, q]];
                if apq.abs() <= tol * T::of(1e-3) {
                    continue;
                }
                let theta = (d[[q, q]] - d[[p, p]]) / (T::of(2.0) * apq);
                let t = if theta.abs() > T::of(1e18) {
                    (T::of(2.0) * theta).recip()
                } else {
                    let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                    sign / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = (t * t + T::one()).sqrt().recip();
                let s = t * c;

                // Rotate rows/columns p and q of d.
                for k in 0..n {
                    let dkp = d[[k, p]];
                    let dkq = d[[k, q]];
                    d[[k, p]] = c * dkp - s * dkq;
                    d[[k, q]] = s * dkp + c * dkq;
                }
                for k in 0..n {
                    let dpk = d[[p, k]];
                    let dqk = d[[q, k]];
                    d[[p, k]] = c * dpk - s * dqk;
                    d[[q, k]] = s * dpk + c * dqk;
                }
                d[[p, q]] = T::zero();
                d[[q, p]] = T::zero();
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    // Sort eigenpairs by descending eigenvalue; ties keep original order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        d[[j, j]]
            .partial_cmp(&d[[i, i]])
            .expect("finite eigenvalues")
            .then(i.cmp(&j))
    });
    let mut values = Array1::<T>::zeros(n);
    let mut vectors = Array2::<T>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = d[[src, src]];
        for r in 0..n {
            vectors[[r, dst]] = v[[r, src]];
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Solves `A x = b` for symmetric positive definite `A` via Cholesky.
pub fn solve_spd<T: Real>(a: &Array2<T>, b: &Array1<T>, what: &'static str) -> Result<Array1<T>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::ShapeMismatch {
            what,
            details: format!("A is {}x{}, b has {}", a.nrows(), a.ncols(), b.len()),
        });
    }
    let mut l = Array2::<T>::zeros((n, n));
    let mut max_diag = T::zero();
    for i in 0..n {
        max_diag = max_diag.max(a[[i, i]].abs());
    }
    let floor = T::epsilon() * max_diag * T::of(n as f64);
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag = diag - l[[j, k]] * l[[j, k]];
        }
        if diag <= floor || !diag.is_finite() {
            return Err(Error::Singular { what });
        }
        let ljj = diag.sqrt();
        l[[j, j]] = ljj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s = s - l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / ljj;
        }
    }
    // Forward then back substitution.
    let mut y = Array1::<T>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    let mut x = Array1::<T>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s = s - l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    Ok(x)
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve_lu<T: Real>(a: &Array2<T>, b: &Array1<T>, what: &'static str) -> Result<Array1<T>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::ShapeMismatch {
            what,
            details: format!("A is {}x{}, b has {}", a.nrows(), a.ncols(), b.len()),
        });
    }
    let mut m = a.to_owned();
    let mut x = b.to_owned();
    let mut scale = T::zero();
    for v in m.iter() {
        scale = scale.max(v.abs());
    }
    let floor = T::epsilon() * scale * T::of(n as f64);
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_val = m[[col, col]].abs();
        for r in (col + 1)..n {
            if m[[r, col]].abs() > pivot_val {
                pivot_val = m[[r, col]].abs();
                pivot_row = r;
            }
        }
        if pivot_val <= floor {
            return Err(Error::Singular { what });
        }
        if pivot_row != col {
            for c in 0..n {
                m.swap([col, c], [pivot_row, c]);
            }
            x.swap(col, pivot_row);
        }
        for r in (col + 1)..n {
            let f = m[[r, col]] / m[[col, col]];
            if f == T::zero() {
                continue;
            }
            for c in col..n {
                let v = m[[col, c]] * f;
                m[[r, c]] = m[[r, c]] - v;
            }
            let v = x[col] * f;
            x[r] = x[r] - v;
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for c in (i + 1)..n {
            s = s - m[[i, c]] * x[c];
        }
        x[i] = s / m[[i, i]];
    }
    Ok(x)
}

/// Modified Gram-Schmidt with re-orthogonalization: `M = Q R`.
///
/// Returns orthonormal columns `Q` and the upper-triangular `R`. Errors if a
/// column is (numerically) inside the span of the previous ones.
pub fn orthonormalize_columns<T: Real>(m: &Array2<T>) -> Result<(Array2<T>, Array2<T>)> {
    let (rows, cols) = m.dim();
    if cols == 0 || rows < cols {
        return Err(Error::ShapeMismatch {
            what: "orthonormalize_columns",
            details: format!("{}x{} matrix cannot have orthonormal columns", rows, cols),
        });
    }
    let mut q = m.to_owned();
    let mut r = Array2::<T>::zeros((cols, cols));
    for k in 0..cols {
        let orig_norm = (0..rows)
            .map(|i| q[[i, k]] * q[[i, k]])
            .sum::<T>()
            .sqrt();
        // Two projection passes keep orthogonality near machine precision.
        for _pass in 0..2 {
            for j in 0..k {
                let mut dot = T::zero();
                for i in 0..rows {
                    dot += q[[i, j]] * q[[i, k]];
                }
                r[[j, k]] += dot;
                for i in 0..rows {
                    let v = q[[i, j]] * dot;
                    q[[i, k]] = q[[i, k]] - v;
                }
            }
        }
        let norm = (0..rows)
            .map(|i| q[[i, k]] * q[[i, k]])
            .sum::<T>()
            .sqrt();
        if norm <= T::of(1e-10) * orig_norm.max(T::epsilon()) {
            let null: Vec<f64> = (0..cols).map(|c| if c == k { 1.0 } else { 0.0 }).collect();
            return Err(Error::RankDeficient {
                null_direction: null,
            });
        }
        r[[k, k]] = norm;
        for i in 0..rows {
            q[[i, k]] = q[[i, k]] / norm;
        }
    }
    Ok((q, r))
}

/// Sine of the largest principal angle between the column spans of `a` and
/// `b` (both full column rank, same number of columns).
///
/// Both matrices are orthonormalized and the sine is the largest singular
/// value of the residual `Qb - Qa (Qa^T Qb)`, i.e. of the part of one span
/// the other cannot represent. This form stays accurate for tiny angles,
/// where the equivalent `sqrt(1 - lambda_min)` cancels catastrophically.
/// Zero means identical spans; one means some direction of one span is
/// orthogonal to all of the other.
pub fn subspace_sin<T: Real>(a: &Array2<T>, b: &Array2<T>) -> Result<T> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(Error::ShapeMismatch {
            what: "subspace_sin",
            details: format!("{:?} vs {:?}", a.dim(), b.dim()),
        });
    }
    let (qa, _) = orthonormalize_columns(a)?;
    let (qb, _) = orthonormalize_columns(b)?;
    let resid = &qb - &qa.dot(&qa.t().dot(&qb));
    let eig = sym_eigen(&resid.t().dot(&resid))?;
    let lam_max = eig.values[0].max(T::zero()).min(T::one());
    Ok(lam_max.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn jacobi_matches_hand_computed_two_by_two() {
        // Eigenvalues of [[2,1],[1,2]] are 3 and 1.
        let a = array![[2.0_f64, 1.0], [1.0, 2.0]];
        let e = sym_eigen(&a).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
        let v0 = [e.vectors[[0, 0]], e.vectors[[1, 0]]];
        assert!((v0[0].abs() - (0.5_f64).sqrt()).abs() < 1e-12);
        assert!((v0[0] - v0[1]).abs() < 1e-12, "eigenvector of 3 is (1,1)/sqrt(2)");
    }

    #[test]
    fn jacobi_reconstructs_random_symmetric_matrix() {
        // Deterministic pseudo-random symmetric matrix via a small LCG.
        let n = 12;
        let mut state = 0x2545F4914F6CDD1D_u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        let mut a = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let v = next();
                a[[i, j]] = v;
                a[[j, i]] = v;
            }
        }
        let e = sym_eigen(&a).unwrap();
        // Check A = V diag(w) V^T and orthonormality.
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += e.vectors[[i, k]] * e.values[k] * e.vectors[[j, k]];
                }
                assert!((s - a[[i, j]]).abs() < 1e-10, "reconstruction at ({i},{j})");
                let mut dot = 0.0;
                for k in 0..n {
                    dot += e.vectors[[k, i]] * e.vectors[[k, j]];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-12, "orthonormality at ({i},{j})");
            }
        }
        for k in 1..n {
            assert!(e.values[k - 1] >= e.values[k], "descending order");
        }
    }

    #[test]
    fn spd_solve_matches_direct_inverse() {
        let a = array![[4.0_f64, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let b = array![1.0_f64, -2.0, 0.5];
        let x = solve_spd(&a, &b, "test").unwrap();
        let r = a.dot(&x);
        for i in 0..3 {
            assert!((r[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn spd_solve_rejects_singular_matrix() {
        let a = array![[1.0_f64, 1.0], [1.0, 1.0]];
        let b = array![1.0_f64, 1.0];
        assert!(solve_spd(&a, &b, "test").is_err());
    }

    #[test]
    fn lu_solve_handles_unsymmetric_systems() {
        let a = array![[0.0_f64, 2.0, 1.0], [1.0, -1.0, 0.0], [3.0, 0.0, -2.0]];
        let b = array![4.0_f64, 1.0, -1.0];
        let x = solve_lu(&a, &b, "test").unwrap();
        let r = a.dot(&x);
        for i in 0..3 {
            assert!((r[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn gram_schmidt_factors_and_detects_rank_deficiency() {
        let m = array![[1.0_f64, 1.0], [1.0, 2.0], [0.0, 1.0]];
        let (q, r) = orthonormalize_columns(&m).unwrap();
        // Q^T Q = I
        for i in 0..2 {
            for j in 0..2 {
                let mut dot = 0.0;
                for k in 0..3 {
                    dot += q[[k, i]] * q[[k, j]];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-12);
            }
        }
        // Q R = M
        let qr = q.dot(&r);
        for i in 0..3 {
            for j in 0..2 {
                assert!((qr[[i, j]] - m[[i, j]]).abs() < 1e-12);
            }
        }

        let dup = array![[1.0_f64, 2.0], [1.0, 2.0], [1.0, 2.0]];
        assert!(matches!(
            orthonormalize_columns(&dup),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn subspace_sin_spans_the_identical_rotated_and_orthogonal_cases() {
        // Same span under different bases: angle zero.
        let a = array![[1.0_f64, 0.0], [0.0, 1.0], [0.0, 0.0]];
        let b = array![[1.0_f64, 1.0], [1.0, -1.0], [0.0, 0.0]];
        assert!(subspace_sin(&a, &b).unwrap() < 1e-12);

        // One shared direction, one orthogonal direction: angle one.
        let c = array![[1.0_f64, 0.0], [0.0, 0.0], [0.0, 1.0]];
        let d = array![[1.0_f64, 0.0], [0.0, 1.0], [0.0, 0.0]];
        assert!((subspace_sin(&c, &d).unwrap() - 1.0).abs() < 1e-12);

        // Single vectors at a known angle: sin(45 degrees).
        let e = array![[1.0_f64], [0.0]];
        let f = array![[1.0_f64], [1.0]];
        let expect = (std::f64::consts::FRAC_PI_4).sin();
        assert!((subspace_sin(&e, &f).unwrap() - expect).abs() < 1e-12);

        assert!(subspace_sin(&a, &e).is_err());
    }
}
