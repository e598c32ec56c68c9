//! Evaluation metrics: prediction mean absolute error and the sine of the
//! largest principal angle between subspaces.

use ndarray::Array2;

use crate::{Result, SimError};

/// Which cells enter the error average.
#[derive(Debug, Clone, Copy)]
pub enum CellSelection<'a> {
    /// Every cell of the selected rows. Simulated references are known
    /// everywhere, so reconstruction error is measured on the full grid.
    All,
    /// Only cells marked `true`, e.g. the observed cells of a decimated
    /// dataset.
    Observed(&'a Array2<bool>),
}

/// Mean absolute error between a reference matrix and fitted values.
///
/// With `rows = Some(subset)` the average runs over that case subset (the
/// casewise-contamination convention: score the untouched rows only);
/// otherwise over all rows. Contaminated and decimated experiments pass the
/// pre-contamination reference, so the fit is scored on how well it
/// recovers the underlying value, not the planted outlier.
pub fn mae(
    reference: &Array2<f64>,
    fitted: &Array2<f64>,
    rows: Option<&[usize]>,
    cells: CellSelection<'_>,
) -> Result<f64> {
    let (n, p) = reference.dim();
    if fitted.dim() != (n, p) {
        return Err(SimError::Invalid {
            name: "fitted",
            reason: format!("{:?} does not match the reference {:?}", fitted.dim(), (n, p)),
        });
    }
    if let CellSelection::Observed(mask) = cells {
        if mask.dim() != (n, p) {
            return Err(SimError::Invalid {
                name: "cells",
                reason: format!("mask {:?} does not match the reference {:?}", mask.dim(), (n, p)),
            });
        }
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut visit = |i: usize| -> Result<()> {
        if i >= n {
            return Err(SimError::Invalid {
                name: "rows",
                reason: format!("row {i} outside 0..{n}"),
            });
        }
        for j in 0..p {
            let keep = match cells {
                CellSelection::All => true,
                CellSelection::Observed(mask) => mask[[i, j]],
            };
            if keep {
                sum += (reference[[i, j]] - fitted[[i, j]]).abs();
                count += 1;
            }
        }
        Ok(())
    };
    match rows {
        Some(subset) => {
            for &i in subset {
                visit(i)?;
            }
        }
        None => {
            for i in 0..n {
                visit(i)?;
            }
        }
    }
    if count == 0 {
        return Err(SimError::EmptyAverage {
            what: "mean absolute error",
        });
    }
    Ok(sum / count as f64)
}

/// Per-case mean absolute errors `m_i` over the selected cells.
///
/// Rows with no selected cells yield `NaN` rather than an error, so sparse
/// diagnostics keep row alignment.
pub fn row_maes(
    reference: &Array2<f64>,
    fitted: &Array2<f64>,
    cells: CellSelection<'_>,
) -> Result<Vec<f64>> {
    let (n, p) = reference.dim();
    if fitted.dim() != (n, p) {
        return Err(SimError::Invalid {
            name: "fitted",
            reason: format!("{:?} does not match the reference {:?}", fitted.dim(), (n, p)),
        });
    }
    if let CellSelection::Observed(mask) = cells {
        if mask.dim() != (n, p) {
            return Err(SimError::Invalid {
                name: "cells",
                reason: format!("mask {:?} does not match the reference {:?}", mask.dim(), (n, p)),
            });
        }
    }
    Ok((0..n)
        .map(|i| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for j in 0..p {
                let keep = match cells {
                    CellSelection::All => true,
                    CellSelection::Observed(mask) => mask[[i, j]],
                };
                if keep {
                    sum += (reference[[i, j]] - fitted[[i, j]]).abs();
                    count += 1;
                }
            }
            if count == 0 {
                f64::NAN
            } else {
                sum / count as f64
            }
        })
        .collect())
}

/// Sine of the largest principal angle between two column spans, in
/// `[0, 1]`. Zero for identical spans, one when some direction of one span
/// is orthogonal to all of the other. Errors on rank-deficient input.
pub fn subspace_sin_angle(e_hat: &Array2<f64>, e_true: &Array2<f64>) -> Result<f64> {
    Ok(robfpca::linalg::subspace_sin(e_hat, e_true)?)
}
