use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("variable list is empty")]
    EmptyVariables,

    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),

    #[error("invalid template: {0}")]
    InvalidTemplate(String),

    #[error("template mismatch between elements")]
    TemplateMismatch,

    #[error("indeterminate extended-real operation: {0}")]
    Indeterminate(&'static str),

    #[error("NaN is not an extended real")]
    NotANumber,

    #[error("constraint system is infeasible: variable {var} has lower bound {lower} above upper bound {upper}")]
    Infeasible { var: usize, lower: f64, upper: f64 },

    #[error(transparent)]
    Degree(#[from] DegreeError),

    #[error("parameter layout mismatch: expected {expected} coordinates, got {found}")]
    LayoutMismatch { expected: usize, found: usize },

    #[error("parameter vector lies outside the parameter space")]
    OutsideParamSpace,

    #[error("parse error at {line}:{column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no feasible point found: {0}")]
    NoFeasibleSeed(String),

    #[error("invariant maps are not comparable: {0}")]
    IncomparableMaps(String),

    #[error("malformed invariant map: {0}")]
    MalformedMap(String),

    #[error("fixpoint iteration exceeded {0} block visits")]
    Diverged(usize),
}

/// A polynomial expansion produced a monomial of degree three or more.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}degree {degree} monomial `{monomial}` exceeds the quadratic bound", match .instruction { Some(i) => format!("instruction #{}: ", i + 1), None => String::new() })]
pub struct DegreeError {
    /// Offending monomial, rendered with variable indices or names.
    pub monomial: String,
    pub degree: usize,
    /// Zero-based index of the instruction that triggered the overflow, when known.
    pub instruction: Option<usize>,
}

pub type Result<T> = std::result::Result<T, Error>;
