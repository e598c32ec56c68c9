//! Robust functional principal component analysis for longitudinal data
//! observed on a common time grid with arbitrary missingness.

mod error;
mod scalar;

pub mod data;
pub mod kernels;
pub mod linalg;
pub mod mm;
pub mod model;
pub mod naive;
pub mod smoothing;

pub use data::LongitudinalDataset;
pub use error::{Error, Result};
pub use mm::{fit_mm, ComponentCount, MmConfig};
pub use model::FpcaModel;
pub use naive::{fit_classical, fit_naive};
pub use scalar::Real;

/// `f64` dataset alias.
pub type DatasetF64 = data::LongitudinalDataset<f64>;
/// `f64` fitted-model alias.
pub type ModelF64 = model::FpcaModel<f64>;
