use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("value {value} is not among the known distinct values")]
    UnknownValue { value: String },

    #[error("multiplicity vectors have dimensions {left} and {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("cannot shrink node dimension from {from} to {to}")]
    DimensionShrink { from: usize, to: usize },

    #[error("multiplicity vectors must have at least one coordinate")]
    EmptyDimension,

    #[error("arithmetic overflow while computing {what}")]
    Overflow { what: &'static str },

    #[error("node {lower:?} does not lie below {upper:?}")]
    NotBelow { lower: Vec<u32>, upper: Vec<u32> },

    #[error("level {n} exceeds starting level {m}")]
    InvalidLevel { m: usize, n: usize },

    #[error(
        "alternating sum for p_{{{m},{n}}}(t={t}, theta={theta}) is numerically unstable (value {value}, error bound {bound:e})"
    )]
    NumericalInstability {
        m: usize,
        n: usize,
        t: f64,
        theta: f64,
        value: f64,
        bound: f64,
    },

    #[error("series for d_{m}(t={t}) did not reach tolerance {tol:e} after {terms} terms (error bound {bound:e})")]
    NonConvergence {
        m: usize,
        t: f64,
        tol: f64,
        terms: usize,
        bound: f64,
    },

    #[error("lattice below the top node has {size} nodes, over the budget of {budget}; use the Monte Carlo pipeline")]
    LatticeBudget { size: u128, budget: u128 },

    #[error("exhaustive enumeration needs {size} branches, over the budget of {budget}")]
    EnumerationBudget { size: u128, budget: u128 },

    #[error("observation {value} has zero probability under the model (p0 = 0 and never observed)")]
    Misspecified { value: i64 },

    #[error("all grid points have zero likelihood")]
    ZeroLikelihood,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
