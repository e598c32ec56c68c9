//! Casewise and cellwise outlier injection.
//!
//! Casewise contamination replaces whole curves: the first `floor(eps * n)`
//! rows become `K * sqrt(lambda1) * c` for a carrier `c` orthogonal to the
//! model directions. Replacing a fixed leading block rather than a random
//! one keeps runs reproducible and costs nothing, because the generated
//! cases are exchangeable.
//!
//! Cellwise contamination flips a Bernoulli coin for every cell in row-major
//! order and shifts the selected observed cells by `K * sigma_jj`, the
//! outlier size in units of that column's model variance. Drawing a coin
//! for every cell, observed or not, keeps the selected positions identical
//! across decimation rates under a shared seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use robfpca::LongitudinalDataset;

use crate::scenario::RealizedScenario;
use crate::{Result, SimError};

/// How the casewise carrier direction is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseDirection {
    /// The first spare realized direction (the one after the `q` model
    /// directions); orthogonal to the model subspace by construction.
    NextEigenvector,
    /// A seeded random direction, projected orthogonal to the model
    /// subspace and normalized.
    RandomOrthogonal,
}

/// One contamination setting.
#[derive(Debug, Clone, Copy)]
pub struct ContaminationSpec {
    /// Fraction of cases replaced (casewise).
    pub eps_case: f64,
    /// Per-cell contamination probability (cellwise).
    pub eps_cell: f64,
    /// Outlier size, a unitless multiple.
    pub k: f64,
    /// Carrier choice for casewise replacement.
    pub case_direction: CaseDirection,
}

impl ContaminationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.eps_case) {
            return Err(SimError::Invalid {
                name: "eps_case",
                reason: format!("{} outside [0, 0.5)", self.eps_case),
            });
        }
        if !(0.0..1.0).contains(&self.eps_cell) {
            return Err(SimError::Invalid {
                name: "eps_cell",
                reason: format!("{} outside [0, 1)", self.eps_cell),
            });
        }
        if !(self.k >= 0.0) {
            return Err(SimError::Invalid {
                name: "K",
                reason: format!("outlier size {} is negative", self.k),
            });
        }
        Ok(())
    }
}

/// Replace the first `floor(eps_case * n)` cases by `K sqrt(lambda1) c`.
///
/// Returns the contaminated dataset and the index set of untouched rows.
/// The observation mask is preserved, so decimated datasets keep their
/// cells. `seed` is consumed only by the `RandomOrthogonal` carrier.
pub fn contaminate_case(
    data: &LongitudinalDataset<f64>,
    spec: &ContaminationSpec,
    realized: &RealizedScenario,
    q: usize,
    seed: u64,
) -> Result<(LongitudinalDataset<f64>, Vec<usize>)> {
    spec.validate()?;
    let (n, p) = data.values().dim();
    let replaced = (spec.eps_case * n as f64).floor() as usize;
    if spec.eps_case > 0.0 && replaced == 0 {
        return Err(SimError::Invalid {
            name: "eps_case",
            reason: format!("{} of {n} cases rounds down to zero rows", spec.eps_case),
        });
    }
    if replaced == 0 {
        return Ok((data.clone(), (0..n).collect()));
    }
    let carrier = carrier_direction(spec.case_direction, realized, q, p, seed)?;
    let scale = spec.k * realized.lambda1.sqrt();
    let mut values = data.values().clone();
    for i in 0..replaced {
        for j in 0..p {
            values[[i, j]] = scale * carrier[j];
        }
    }
    let contaminated = LongitudinalDataset::new(
        data.grid().to_vec(),
        values,
        data.mask().clone(),
        data.case_ids().to_vec(),
    )?;
    Ok((contaminated, (replaced..n).collect()))
}

fn carrier_direction(
    choice: CaseDirection,
    realized: &RealizedScenario,
    q: usize,
    p: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if realized.directions.nrows() != p {
        return Err(SimError::Invalid {
            name: "directions",
            reason: format!(
                "realized on a {}-point grid but the data have {p} columns",
                realized.directions.nrows()
            ),
        });
    }
    match choice {
        CaseDirection::NextEigenvector => {
            if realized.directions.ncols() <= q {
                return Err(SimError::Invalid {
                    name: "case_direction",
                    reason: format!(
                        "no spare direction: the scenario realizes {} of rank {q}",
                        realized.directions.ncols()
                    ),
                });
            }
            Ok(realized.directions.column(q).to_vec())
        }
        CaseDirection::RandomOrthogonal => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut c: Vec<f64> = (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            for k in 0..q {
                let overlap: f64 = (0..p).map(|j| c[j] * realized.directions[[j, k]]).sum();
                for j in 0..p {
                    c[j] -= overlap * realized.directions[[j, k]];
                }
            }
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-12 {
                return Err(SimError::Invalid {
                    name: "case_direction",
                    reason: "random draw collapsed onto the model subspace".into(),
                });
            }
            for v in &mut c {
                *v /= norm;
            }
            Ok(c)
        }
    }
}

/// Shift independently selected observed cells by `+K sigma_jj`.
///
/// One uniform draw is consumed per cell in row-major order, so the same
/// seed selects the same positions on any mask.
pub fn contaminate_cell(
    data: &LongitudinalDataset<f64>,
    spec: &ContaminationSpec,
    sigma_diag: &[f64],
    seed: u64,
) -> Result<LongitudinalDataset<f64>> {
    spec.validate()?;
    let (n, p) = data.values().dim();
    if sigma_diag.len() != p {
        return Err(SimError::Invalid {
            name: "sigma_diag",
            reason: format!("{} entries for {p} columns", sigma_diag.len()),
        });
    }
    let mut values = data.values().clone();
    let mask = data.mask();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        for j in 0..p {
            let hit = rng.random::<f64>() < spec.eps_cell;
            if hit && mask[[i, j]] {
                values[[i, j]] += spec.k * sigma_diag[j];
            }
        }
    }
    Ok(LongitudinalDataset::new(
        data.grid().to_vec(),
        values,
        mask.clone(),
        data.case_ids().to_vec(),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{lrs_like, sample_realized};

    fn spec(eps_case: f64, eps_cell: f64, k: f64) -> ContaminationSpec {
        ContaminationSpec {
            eps_case,
            eps_cell,
            k,
            case_direction: CaseDirection::NextEigenvector,
        }
    }

    #[test]
    fn replaced_rows_match_the_construction_and_bookkeeping_holds() {
        let sc = lrs_like(60, 1, 5);
        let realized = sc.realize().unwrap();
        let data = sample_realized(&sc, &realized, 9).unwrap();
        let (out, clean) = contaminate_case(&data, &spec(0.1, 0.0, 2.5), &realized, 2, 0).unwrap();
        let replaced = 6;
        assert_eq!(clean, (replaced..60).collect::<Vec<_>>());
        assert_eq!(clean.len() + replaced, 60);
        let scale = 2.5 * 30.05_f64.sqrt();
        for i in 0..replaced {
            for j in 0..50 {
                let expect = scale * realized.directions[[j, 2]];
                assert_eq!(out.values()[[i, j]], expect, "cell ({i}, {j})");
            }
        }
        for i in replaced..60 {
            for j in 0..50 {
                assert_eq!(out.values()[[i, j]], data.values()[[i, j]]);
            }
        }
    }

    #[test]
    fn carriers_are_orthogonal_to_the_model_directions() {
        let sc = lrs_like(40, 1, 5);
        let realized = sc.realize().unwrap();
        let next = carrier_direction(CaseDirection::NextEigenvector, &realized, 2, 50, 0).unwrap();
        let random =
            carrier_direction(CaseDirection::RandomOrthogonal, &realized, 2, 50, 17).unwrap();
        for c in [&next, &random] {
            for k in 0..2 {
                let dot: f64 = (0..50).map(|j| c[j] * realized.directions[[j, k]]).sum();
                assert!(dot.abs() < 1e-10, "carrier overlaps direction {k}: {dot}");
            }
            let norm: f64 = c.iter().map(|v| v * v).sum::<f64>();
            assert!((norm - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn missing_spare_direction_is_an_error() {
        let sc = lrs_like(40, 1, 5);
        let mut realized = sc.realize().unwrap();
        realized.directions = realized.directions.slice(ndarray::s![.., ..2]).to_owned();
        let data = sample_realized(&sc, &sc.realize().unwrap(), 9).unwrap();
        let result = contaminate_case(&data, &spec(0.1, 0.0, 1.0), &realized, 2, 0);
        assert!(result.is_err());
    }

    #[test]
    fn zero_rate_and_zero_size_leave_the_data_unchanged() {
        let sc = lrs_like(40, 1, 5);
        let realized = sc.realize().unwrap();
        let data = sample_realized(&sc, &realized, 9).unwrap();
        let (untouched, clean) =
            contaminate_case(&data, &spec(0.0, 0.0, 3.0), &realized, 2, 0).unwrap();
        assert_eq!(untouched, data);
        assert_eq!(clean.len(), 40);
        let shifted = contaminate_cell(&data, &spec(0.0, 0.02, 0.0), &realized.sigma_diag, 3).unwrap();
        assert_eq!(shifted, data);
    }

    #[test]
    fn cell_hit_counts_sit_in_the_binomial_band() {
        let sc = lrs_like(100, 1, 5);
        let realized = sc.realize().unwrap();
        let data = sample_realized(&sc, &realized, 13).unwrap();
        let eps = 1.0 / 50.0;
        let out = contaminate_cell(&data, &spec(0.0, eps, 4.0), &realized.sigma_diag, 21).unwrap();
        let mut hits = 0usize;
        let mut cases_hit = 0usize;
        for i in 0..100 {
            let mut any = false;
            for j in 0..50 {
                if out.values()[[i, j]] != data.values()[[i, j]] {
                    hits += 1;
                    any = true;
                }
            }
            if any {
                cases_hit += 1;
            }
        }
        // n p eps = 100 hits expected, 3 sigma of Binomial(5000, 0.02) is 30.
        assert!(
            (hits as f64 - 100.0).abs() < 30.0,
            "{hits} cells contaminated"
        );
        // P(a case has at least one hit) = 1 - (1 - 1/p)^p, about 0.636.
        let frac = cases_hit as f64 / 100.0;
        let expect = 1.0 - (1.0 - eps).powi(50);
        assert!(
            (frac - expect).abs() < 0.15,
            "{frac} of cases hit vs {expect}"
        );
    }

    #[test]
    fn cell_contamination_respects_the_observation_mask() {
        let sc = lrs_like(50, 1, 5);
        let realized = sc.realize().unwrap();
        let data = sample_realized(&sc, &realized, 9)
            .unwrap()
            .decimate(0.5, 77)
            .unwrap();
        let out = contaminate_cell(&data, &spec(0.0, 0.1, 5.0), &realized.sigma_diag, 31).unwrap();
        assert_eq!(out.mask(), data.mask());
        let mut changed = 0usize;
        for i in 0..50 {
            for j in 0..50 {
                if data.mask()[[i, j]] {
                    if out.values()[[i, j]] != data.values()[[i, j]] {
                        changed += 1;
                        let delta = out.values()[[i, j]] - data.values()[[i, j]];
                        assert!((delta - 5.0 * realized.sigma_diag[j]).abs() < 1e-12);
                    }
                } else {
                    assert!(out.values()[[i, j]].is_nan());
                }
            }
        }
        assert!(changed > 0, "no observed cell was shifted");
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(spec(0.5, 0.0, 1.0).validate().is_err());
        assert!(spec(-0.1, 0.0, 1.0).validate().is_err());
        assert!(spec(0.0, 1.0, 1.0).validate().is_err());
        assert!(spec(0.0, 0.0, -1.0).validate().is_err());
        assert!(spec(0.49, 0.99, 0.0).validate().is_ok());
    }
}
