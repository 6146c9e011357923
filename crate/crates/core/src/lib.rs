//! Multi-intervention stepped-wedge trial designs, the bias of constant-effect
//! estimators under exposure-time-varying effects, mixed-model fitting, and
//! reproducible simulation studies.

pub mod bias;
pub mod curves;
pub mod design;
pub mod error;
pub mod estimate;
pub mod fixture;
pub mod linalg;
pub mod rng;
pub mod scalar;
pub mod simulate;
pub mod study;
pub mod variance;

pub use bias::{WeightMatrix, WeightSource};
pub use curves::{CurveFamily, CurveSpec, EffectCurve, EstimandSet};
pub use design::{DesignLayout, FixedStructure, LayoutKind, LayoutOptions};
pub use error::{Error, Result};
pub use estimate::{FitResult, ModelKind};
pub use linalg::Matrix;
pub use scalar::{Exact, Real, Scalar};
pub use simulate::{CellTable, SimulationConfig, TrialDataset};
pub use variance::VarianceComponents;

pub type Matrix64 = Matrix<f64>;
pub type ExactMatrix = Matrix<Exact>;
pub type WeightMatrix64 = WeightMatrix<f64>;
pub type ExactWeightMatrix = WeightMatrix<Exact>;
