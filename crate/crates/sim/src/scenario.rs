//! Scenario definition and sample generation.
//!
//! A scenario is a Gaussian model on a common grid over `[0, 1]`:
//!
//! ```text
//! x_i = mu + sum_k sqrt(pi_k) z_ik e_k + sqrt(pi_0) eps_i
//! ```
//!
//! with orthonormal directions `e_k` evaluated on the grid, independent
//! standard normal scores `z_ik` and white noise `eps_i`. Equivalently the
//! covariance is `sum_k pi_k e_k e_k^T + pi_0 I`, whose top eigenvalue is
//! `pi_1 + pi_0`.

use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use robfpca::linalg::orthonormalize_columns;
use robfpca::LongitudinalDataset;

use crate::{Result, SimError};

/// A smooth function on `[0, 1]`, evaluated on the scenario grid.
pub type CurveFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Generative model for one simulation scenario.
#[derive(Clone)]
pub struct ScenarioConfig {
    /// Label carried into every report row.
    pub name: String,
    /// Grid size.
    pub p: usize,
    /// Model rank (number of principal directions with nonzero variance).
    pub q: usize,
    /// Component variances followed by the noise variance:
    /// `pi[0..q]` are the `pi_k`, `pi[q]` is `pi_0`.
    pub pi: Vec<f64>,
    /// Mean curve.
    pub mean_fn: CurveFn,
    /// Direction shapes; at least `q`. Extra entries become spare
    /// orthonormal directions, used as casewise contamination carriers.
    pub direction_fns: Vec<CurveFn>,
    /// Project the grid-evaluated mean out of every direction shape before
    /// orthonormalization. The presets enable this so that casewise
    /// outliers, which carry no mean, lie far outside the span of the
    /// center curve.
    pub orthogonalize_against_mean: bool,
    /// Cases per sample.
    pub n: usize,
    /// Monte Carlo replications.
    pub replications: usize,
    /// Master seed for the whole study.
    pub seed: u64,
}

impl fmt::Debug for ScenarioConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScenarioConfig")
            .field("name", &self.name)
            .field("p", &self.p)
            .field("q", &self.q)
            .field("pi", &self.pi)
            .field("direction_fns", &self.direction_fns.len())
            .field("orthogonalize_against_mean", &self.orthogonalize_against_mean)
            .field("n", &self.n)
            .field("replications", &self.replications)
            .field("seed", &self.seed)
            .finish()
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p < 4 {
            return Err(SimError::Invalid {
                name: "p",
                reason: format!("grid size {} is too small", self.p),
            });
        }
        if self.q == 0 {
            return Err(SimError::Invalid {
                name: "q",
                reason: "at least one component is required".into(),
            });
        }
        if self.pi.len() != self.q + 1 {
            return Err(SimError::Invalid {
                name: "pi",
                reason: format!(
                    "expected {} component variances plus the noise variance, got {} entries",
                    self.q,
                    self.pi.len()
                ),
            });
        }
        if self.pi[..self.q].iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(SimError::Invalid {
                name: "pi",
                reason: "component variances must be positive and finite".into(),
            });
        }
        if !(self.pi[self.q] >= 0.0) || !self.pi[self.q].is_finite() {
            return Err(SimError::Invalid {
                name: "pi",
                reason: "the noise variance must be nonnegative and finite".into(),
            });
        }
        if self.direction_fns.len() < self.q {
            return Err(SimError::Invalid {
                name: "direction_fns",
                reason: format!(
                    "{} direction shapes cannot span rank {}",
                    self.direction_fns.len(),
                    self.q
                ),
            });
        }
        if self.direction_fns.len() > self.p {
            return Err(SimError::Invalid {
                name: "direction_fns",
                reason: format!(
                    "{} direction shapes cannot be orthonormal on a {}-point grid",
                    self.direction_fns.len(),
                    self.p
                ),
            });
        }
        if self.n < 2 {
            return Err(SimError::Invalid {
                name: "n",
                reason: format!("sample size {} is too small", self.n),
            });
        }
        if self.replications == 0 {
            return Err(SimError::Invalid {
                name: "replications",
                reason: "at least one replication is required".into(),
            });
        }
        Ok(())
    }

    /// Evaluate the scenario on its grid: mean vector, orthonormal
    /// direction matrix, covariance diagonal and top eigenvalue.
    pub fn realize(&self) -> Result<RealizedScenario> {
        self.validate()?;
        let p = self.p;
        let grid: Vec<f64> = (0..p).map(|j| j as f64 / (p - 1) as f64).collect();
        let mean: Vec<f64> = grid.iter().map(|&t| (self.mean_fn)(t)).collect();
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(SimError::Invalid {
                name: "mean_fn",
                reason: "mean curve is not finite on the grid".into(),
            });
        }
        let f = self.direction_fns.len();
        let mut raw = Array2::zeros((p, f));
        for (c, func) in self.direction_fns.iter().enumerate() {
            for j in 0..p {
                raw[[j, c]] = func(grid[j]);
            }
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(SimError::Invalid {
                name: "direction_fns",
                reason: "a direction shape is not finite on the grid".into(),
            });
        }
        if self.orthogonalize_against_mean {
            let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for c in 0..f {
                    let overlap: f64 = (0..p).map(|j| raw[[j, c]] * mean[j] / norm).sum();
                    for j in 0..p {
                        raw[[j, c]] -= overlap * mean[j] / norm;
                    }
                }
            }
        }
        let (directions, _) = orthonormalize_columns(&raw)?;
        let noise = self.pi[self.q];
        let sigma_diag: Vec<f64> = (0..p)
            .map(|j| {
                (0..self.q)
                    .map(|k| self.pi[k] * directions[[j, k]] * directions[[j, k]])
                    .sum::<f64>()
                    + noise
            })
            .collect();
        Ok(RealizedScenario {
            grid,
            mean,
            directions,
            sigma_diag,
            lambda1: self.pi[0] + noise,
        })
    }
}

/// A scenario evaluated on its grid.
#[derive(Debug, Clone)]
pub struct RealizedScenario {
    /// Strictly increasing grid over `[0, 1]`.
    pub grid: Vec<f64>,
    /// Mean curve on the grid.
    pub mean: Vec<f64>,
    /// Orthonormal directions, `p` rows; the first `q` columns carry
    /// variance, any further columns are spare contamination carriers.
    pub directions: Array2<f64>,
    /// Covariance diagonal `sum_k pi_k e_kj^2 + pi_0`.
    pub sigma_diag: Vec<f64>,
    /// Top covariance eigenvalue `pi_1 + pi_0`.
    pub lambda1: f64,
}

impl RealizedScenario {
    /// The rank-`q` true subspace, for angle evaluation.
    pub fn true_subspace(&self, q: usize) -> Array2<f64> {
        self.directions.slice(ndarray::s![.., ..q]).to_owned()
    }
}

/// Draw one complete sample from an already realized scenario.
///
/// Per case the stream is: `q` component scores, then `p` noise values,
/// all standard normal from `ChaCha8` under `seed`.
pub fn sample_realized(
    scenario: &ScenarioConfig,
    realized: &RealizedScenario,
    seed: u64,
) -> Result<LongitudinalDataset<f64>> {
    let (n, p, q) = (scenario.n, scenario.p, scenario.q);
    let noise_sd = scenario.pi[q].sqrt();
    let sds: Vec<f64> = (0..q).map(|k| scenario.pi[k].sqrt()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Array2::zeros((n, p));
    for i in 0..n {
        let scores: Vec<f64> = (0..q)
            .map(|k| sds[k] * rng.sample::<f64, _>(StandardNormal))
            .collect();
        for j in 0..p {
            let mut v = realized.mean[j];
            for k in 0..q {
                v += scores[k] * realized.directions[[j, k]];
            }
            values[[i, j]] = v + noise_sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let ids = (0..n).map(|i| format!("case{i:04}")).collect();
    Ok(LongitudinalDataset::complete(
        realized.grid.clone(),
        values,
        ids,
    )?)
}

/// Draw one complete sample and return it with the true rank-`q` subspace.
pub fn generate_sample(
    scenario: &ScenarioConfig,
    seed: u64,
) -> Result<(LongitudinalDataset<f64>, Array2<f64>)> {
    let realized = scenario.realize()?;
    let data = sample_realized(scenario, &realized, seed)?;
    Ok((data, realized.true_subspace(scenario.q)))
}

use std::f64::consts::PI;

/// Complete-data benchmark scenario on a 50-point grid: a tall rising mean
/// far above the data's spread, a sharp sigmoid first component, two
/// cosine shapes after it, component variances (30, 15) and noise 0.05.
///
/// The third direction carries no variance; casewise contamination uses it
/// as the carrier, so outlying curves are exactly orthogonal to both the
/// model subspace and (by construction) the mean.
pub fn lrs_like(n: usize, replications: usize, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        name: "lrs-like".into(),
        p: 50,
        q: 2,
        pi: vec![30.0, 15.0, 0.05],
        mean_fn: Arc::new(|t| 45.0 + 8.0 * (PI * t).sin() + 12.0 * t),
        direction_fns: vec![
            Arc::new(|t: f64| ((t - 0.5) / 0.1).tanh()),
            Arc::new(|t: f64| (2.0 * PI * t).cos()),
            Arc::new(|t: f64| (3.0 * PI * t).cos()),
        ],
        orthogonalize_against_mean: true,
        n,
        replications,
        seed,
    }
}

/// Incomplete-data benchmark scenario on a 50-point grid: a declining
/// positive mean (biomarker-decay shaped), a sigmoid first component with
/// its transition off center, a full sine second component, and the same
/// variance structure as [`lrs_like`]. The spare third direction is the
/// casewise carrier.
pub fn macs_like(n: usize, replications: usize, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        name: "macs-like".into(),
        p: 50,
        q: 2,
        pi: vec![30.0, 15.0, 0.05],
        mean_fn: Arc::new(|t| 28.0 - 10.0 * t + 3.0 * t * t),
        direction_fns: vec![
            Arc::new(|t: f64| ((t - 0.4) / 0.12).tanh()),
            Arc::new(|t: f64| (2.0 * PI * t).sin()),
            Arc::new(|t: f64| (3.0 * PI * t).cos()),
        ],
        orthogonalize_against_mean: true,
        n,
        replications,
        seed,
    }
}
