use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },

    #[error("measures are not in convex order: {0}")]
    NotInConvexOrder(String),

    #[error("{}point is not in the relative interior of conv(supp nu) (interior margin {margin:.3e})", fiber_prefix(.fiber))]
    NotIrreducible { fiber: Option<usize>, margin: f64 },

    #[error("{}dual variable diverged: |h| = {norm:.3e} exceeds bound {bound:.3e}", fiber_prefix(.fiber))]
    DualDivergence {
        fiber: Option<usize>,
        norm: f64,
        bound: f64,
    },

    #[error("{}degenerate fiber: conditional covariance condition number {condition:.3e}", fiber_prefix(.fiber))]
    DegenerateFiber { fiber: Option<usize>, condition: f64 },

    #[error("{context} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        context: String,
        iterations: usize,
        residual: f64,
    },

    #[error("relative entropy is infinite: {0}")]
    InfiniteEntropy(String),

    #[error("infeasible parameters: constraint `{constraint}` violated by {amount:.3e}")]
    InfeasibleParameters { constraint: String, amount: f64 },

    #[error("terminal posterior is ambiguous: point is not an atom of the terminal law")]
    TerminalAmbiguity,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("linear program: {0}")]
    LinearProgram(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

fn fiber_prefix(fiber: &Option<usize>) -> String {
    match fiber {
        Some(i) => format!("fiber {i}: "),
        None => String::new(),
    }
}

impl Error {
    /// Attaches a fiber index to the errors raised by per-fiber solves.
    pub fn with_fiber(self, index: usize) -> Self {
        match self {
            Error::NotIrreducible { margin, .. } => Error::NotIrreducible {
                fiber: Some(index),
                margin,
            },
            Error::DualDivergence { norm, bound, .. } => Error::DualDivergence {
                fiber: Some(index),
                norm,
                bound,
            },
            Error::DegenerateFiber { condition, .. } => Error::DegenerateFiber {
                fiber: Some(index),
                condition,
            },
            other => other,
        }
    }

    pub(crate) fn field(field: &str, message: impl Into<String>) -> Self {
        Error::Field {
            field: field.to_string(),
            message: message.into(),
        }
    }
}
