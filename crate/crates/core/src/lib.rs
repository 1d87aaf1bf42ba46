//! Robust D-optimal designs for generalized linear meta-models of simulation
//! output, with heteroscedastic or correlated errors and pseudo-random number
//! stream assignment.

pub mod cli;
pub mod covariance;
pub mod criteria;
pub mod error;
pub mod fisher;
pub mod linalg;
pub mod model;
pub mod optimize;
pub mod priors;
pub mod studies;

pub use covariance::{KernelKind, KernelSpec, PrnAssignment, PrnCorrelationSpec};
pub use criteria::{CriterionValue, Efficiency, ModelConfig, PrnEvaluator};
pub use error::{Error, Result};
pub use model::{BasisSpec, Bound, Design, DesignPoint, LinkSpec, VarianceModel};
pub use optimize::{AnnealingSchedule, GridSpec, OptimizationResult, PrnMode};
pub use priors::{PriorSpec, QuadratureGrid};
