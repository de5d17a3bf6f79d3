//! Numerical periodic homogenization of locally periodic elliptic problems.

pub mod cell;
pub mod corrector;
pub mod error;
pub mod fem;
pub mod field;
pub mod linalg;
pub mod mesh;
pub mod norms;
pub mod quad;
pub mod scenario;
pub mod smoothing;
pub mod study;

pub use cell::{CellSolution, EffectiveField, XGrid};
pub use corrector::{CorrectorInputs, R0};
pub use error::{Error, Result};
pub use field::{CoefficientField, Point, Preset, Tensor};
pub use mesh::{GridFunction, Mesh, RegionMask};
pub use scenario::{BoundaryKind, BoundarySpec, Edge, Load, Scenario};
pub use norms::{NormKind, NormRequest};
pub use smoothing::{ExtendedFunction, PropertyReport, Sample};
pub use study::{ConvergenceReport, RateTarget, Verdict};
