//! Phase retrieval from defocused intensity images via the transport of
//! intensity equation.

pub mod error;
pub mod grid;
pub mod io;
pub mod operators;
pub mod phantoms;
pub mod preprocess;
pub mod propagation;
pub mod solvers;
pub mod transform;

pub use error::{Result, TieError};
pub use grid::{make_field, rmse, ApertureMask, ComplexField, Grid2D, OpticalConfig, RealGrid};
pub use operators::Scheme;
pub use solvers::{GroundTruth, IMaxMode, SolverKind, SolverReport, UsTieParams};
