use thiserror::Error;

/// Errors raised anywhere in the analysis pipeline.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite evaluation of {function} at {coordinate}")]
    Evaluation { function: String, coordinate: String },

    #[error("rank-deficient {0}")]
    RankDeficiency(String),

    #[error("degenerate bordered system: {0}")]
    Degeneracy(String),

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("sensitivity failed for parameter {parameter}: {reason}")]
    Sensitivity { parameter: String, reason: String },

    #[error("empty tangent hyperplane: target gradients span all {0} parameter directions")]
    EmptyTangent(usize),

    #[error("isovector {alpha} violates the null property for {target} (residual {residual:.3e})")]
    NullProperty {
        alpha: usize,
        target: String,
        residual: f64,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular coordinate transformation: {0}")]
    Transformation(String),

    #[error("constraint qualification fails: {0}")]
    ConstraintQualification(String),

    #[error("precondition not met: {0}")]
    Precondition(String),

    #[error("report decoding failed: {0}")]
    Decode(String),
}

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context: context.into(),
            expected,
            actual,
        }
    }

    /// Stable snake-case tag used in serialized reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Dimension { .. } => "dimension",
            Error::Evaluation { .. } => "evaluation",
            Error::RankDeficiency(_) => "rank_deficiency",
            Error::Degeneracy(_) => "degeneracy",
            Error::Solver(_) => "solver",
            Error::Sensitivity { .. } => "sensitivity",
            Error::EmptyTangent(_) => "empty_tangent",
            Error::NullProperty { .. } => "null_property",
            Error::Domain(_) => "domain",
            Error::Transformation(_) => "transformation",
            Error::ConstraintQualification(_) => "constraint_qualification",
            Error::Precondition(_) => "precondition",
            Error::Decode(_) => "decode",
        }
    }

    /// Solver-side failures map to a distinct process exit code.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::Solver(_)
                | Error::RankDeficiency(_)
                | Error::Degeneracy(_)
                | Error::Sensitivity { .. }
                | Error::Evaluation { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
