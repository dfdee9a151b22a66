//! Error type shared by the simulation and analysis modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension must be at least 1")]
    ZeroDimension,

    #[error("grid {n} x {refinement} overflows the index type")]
    GridOverflow { n: usize, refinement: usize },

    #[error("coarsening factor {factor} does not divide {steps} increments")]
    NonDivisorFactor { factor: usize, steps: usize },

    #[error("level {level} does not divide the {fine} fine steps of the path")]
    LevelMismatch { level: usize, fine: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite {what} at step {step} (lineage {master}/{path})")]
    NonFinite {
        what: &'static str,
        step: usize,
        master: u64,
        path: u64,
    },

    #[error("Young condition violated: beta {beta} + theta {theta} <= 1")]
    YoungCondition { beta: f64, theta: f64 },

    #[error("driver {what} is not independent of the Brownian path it is paired with")]
    DependentDrivers { what: &'static str },

    #[error("gradient bound violated: sup |grad u| = {sup_grad} >= 1")]
    GradientBound { sup_grad: f64 },

    #[error("near-singular transform at step {step}: |det(I - grad u)| below 1e-6")]
    SingularTransform { step: usize },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
