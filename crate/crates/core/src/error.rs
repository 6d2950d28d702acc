use thiserror::Error;

/// Violations of the material-value / penalty-weight invariants.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("at least two material values are required, got {0}")]
    TooFewValues(usize),
    #[error("material values must be finite")]
    NonFiniteValue,
    #[error("material values must be strictly increasing (values[{index}] <= values[{}])", .index - 1)]
    NotIncreasing { index: usize },
    #[error("alpha must be positive, got {0}")]
    NonPositiveAlpha(f64),
    #[error("beta must be nonnegative, got {0}")]
    NegativeBeta(f64),
    /// `gap` is 1-based: gap `i` lies between `values[i-1]` and `values[i]`.
    #[error("multi-bang condition fails at gap {gap}: (alpha/2)*{width} = {lhs} > sqrt(2*alpha*beta) = {rhs}")]
    GapCondition {
        gap: usize,
        width: f64,
        lhs: f64,
        rhs: f64,
    },
    #[error("diffusion problems need a positive smallest material value, got {0}")]
    NonPositiveFloor(f64),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("coefficient must be positive, minimum is {0}")]
    NonPositiveCoefficient(f64),
    #[error("singular linear system: {0}")]
    SingularSystem(String),
    #[error("residual is not finite at any admissible step length")]
    NonFiniteResidual,
    #[error("reference quantity has zero norm: {0}")]
    ZeroReference(&'static str),
    #[error("invalid grid size {0}; need at least 3 nodes per axis")]
    InvalidGrid(usize),
    #[error("invalid setting: {0}")]
    InvalidSetting(String),
    #[error("malformed field file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
