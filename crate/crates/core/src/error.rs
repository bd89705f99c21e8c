use thiserror::Error;

/// One inequality of the discount-factor requirements that failed.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct FailedCondition {
    /// Short identifier, stable across releases.
    pub id: &'static str,
    /// The inequality in plain notation.
    pub statement: &'static str,
    /// Left side minus right side (negative when violated).
    pub margin: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },

    #[error("parameter `{name}` = {value} is outside {range}")]
    ParameterOutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("type order violated: reference cost {reference} exceeds cost {other}")]
    TypeOrderViolation { reference: f64, other: f64 },

    #[error("gamma = {gamma} is outside [{lo}, {hi}]")]
    GammaOutOfRange { gamma: f64, lo: f64, hi: f64 },

    #[error("invalid game specification: {0}")]
    InvalidSpec(String),

    #[error(
        "discount factor {delta} too low: violates {}; estimated threshold {threshold:.6}",
        .failed.iter().map(|f| f.statement).collect::<Vec<_>>().join(" and ")
    )]
    DeltaTooLow {
        delta: f64,
        failed: Vec<FailedCondition>,
        threshold: f64,
    },

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("program is infeasible")]
    Infeasible,

    #[error("mesh {0} is outside (0, 0.1]")]
    MeshOutOfRange(f64),

    #[error("state is off the equilibrium path")]
    StateOffPath,

    #[error("tail tolerance {epsilon} is too small for discount factor {delta}")]
    EpsilonTooSmallForDelta { epsilon: f64, delta: f64 },

    #[error("trace is empty")]
    EmptyTrace,

    #[error("enumeration length {0} exceeds the limit of 20")]
    LengthTooLarge(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
