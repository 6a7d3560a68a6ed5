//! Sparse log-contrast regression with functional compositional predictors.
//!
//! The pipeline turns irregularly observed composition trajectories into an
//! integrated design matrix ([`design`]), fits a zero-sum constrained group
//! lasso by a scaled augmented Lagrangian ([`solver`]), tunes the basis size
//! and penalty by cross-validation or GIC ([`tuning`]) and selects components
//! by their relative curve energy. [`simulate`] reproduces the synthetic
//! benchmark used to compare constrained, naive and baseline estimators.

pub mod basis;
pub mod composition;
pub mod design;
pub mod error;
pub mod fitio;
pub mod linalg;
pub mod args;
pub mod simulate;
pub mod solver;
pub mod tuning;

pub use basis::{BasisGram, BasisSpec, CoefficientCurves, Domain};
pub use composition::{TrajectoryDataset, Subject, Observation};
pub use design::{DesignMatrices, IntegrationRule};
pub use error::{Error, Result};
pub use solver::{FitResult, SolverOptions, Variant};
