use thiserror::Error;

use crate::nonlinear::IterationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("axis index {index} out of range for a {dims}-dimensional grid")]
    AxisOutOfRange { index: usize, dims: usize },

    #[error("grid too coarse along axis {axis}: {nodes} nodes, need at least {required}")]
    GridTooCoarse {
        axis: usize,
        nodes: usize,
        required: usize,
    },

    /// The two-point problem along `axis` is not regular.
    #[error("boundary conditions along axis {axis} are not regular: |eta| = {eta_abs:e}")]
    EtaDegenerate { axis: usize, eta_abs: f64 },

    #[error("condition validation failed: {}", .0.join("; "))]
    ConditionViolation(Vec<String>),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),

    #[error("model callback failure: {0}")]
    CallbackFailure(String),

    #[error("no contraction: outer iteration diverged after {} steps", .0.increments.len())]
    NoContraction(Box<IterationReport>),

    #[error("iterate left the ball of radius {radius}: distance {distance:e}")]
    BallExit {
        radius: f64,
        distance: f64,
        report: Box<IterationReport>,
    },
}
