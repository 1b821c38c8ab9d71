//! Crate-wide error taxonomy.
//!
//! Variants map one-to-one onto the failure modes of the public operations;
//! the CLI maps them to process exit codes (see [`crate::run`]).

use thiserror::Error;

/// All failure modes surfaced by this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An inclusion voxel touches the cell boundary layer, so the rigid body
    /// cannot be separated from the zero-trace boundary condition.
    #[error("SeparationViolated: inclusion occupies a boundary voxel of the cell (minimum separation {separation} voxels, need >= 1)")]
    SeparationViolated { separation: usize },

    /// A NaN or infinity reached a public entry point.
    #[error("NonFiniteInput: {context}")]
    NonFiniteInput { context: String },

    /// Structurally invalid parameters (non-positive permeability, indefinite
    /// elasticity tensor, unsupported grid size, malformed sample lists, ...).
    #[error("InvalidParams: {0}")]
    InvalidParams(String),

    /// Deformation gradient with non-positive or numerically vanishing
    /// determinant passed to a finite-strain transform.
    #[error("DegenerateDeformation: det F = {det:.3e} is below the admissibility threshold")]
    DegenerateDeformation { det: f64 },

    /// A Fenchel conjugate was requested for a function without declared
    /// superlinear growth, so no finite search radius exists.
    #[error("NotCoercive: conjugate requires declared superlinear growth in the dual variable")]
    NotCoercive,

    /// The conjugate search radius was expanded repeatedly and the maximizer
    /// still sits on the search boundary.
    #[error("RadiusExhausted: argmax pinned to the search boundary at radius {radius:.3e}")]
    RadiusExhausted { radius: f64 },

    /// A sampled midpoint-convexity check failed for an input that a
    /// transform requires to be convex.
    #[error("NotConvex: midpoint convexity violated by {violation:.3e} at a sampled triple")]
    NotConvex { violation: f64 },

    /// Iterative minimization stopped at the iteration cap with the gradient
    /// norm still above tolerance.
    #[error("NonConvergence: {iterations} iterations, gradient norm {grad_norm:.3e} above tolerance {tol:.3e}")]
    NonConvergence {
        iterations: usize,
        grad_norm: f64,
        tol: f64,
    },

    /// The energy law returned its non-finite sentinel at a point where the
    /// solver requires a finite value.
    #[error("ModelNotFinite: energy law not finite at {context}")]
    ModelNotFinite { context: String },

    /// Run-configuration parsing or schema validation failure.
    #[error("Config: {0}")]
    Config(String),

    #[error("Io: {0}")]
    Io(#[from] std::io::Error),

    #[error("Json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
