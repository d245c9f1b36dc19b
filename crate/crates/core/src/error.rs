use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{family}: parameter `{slot}` = {value} is outside the domain ({reason})")]
    Domain { family: &'static str, slot: &'static str, value: f64, reason: &'static str },
    #[error("expected {expected} parameters, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("probability {0} is outside (0, 1)")]
    Probability(f64),
    #[error("empirical target needs at least one finite sample")]
    EmptyTarget,
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("matrix is numerically singular: {0}")]
    Singular(String),
    #[error("the exact W2 Hessian needs a continuous target; use the modified tensor or finite differences for empirical data")]
    EmpiricalHessian,
    #[error("incompatible inputs: {0}")]
    Incompatible(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}
