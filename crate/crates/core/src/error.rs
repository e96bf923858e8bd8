use thiserror::Error;

pub type Result<T> = std::result::Result<T, NpfsError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NpfsError {
    #[error("class {class} has {count} samples, at least 2 are required")]
    EmptyClass { class: usize, count: usize },

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("covariance of class {class} is singular even after diagonal jitter{}", context_suffix(.context))]
    SingularCovariance { class: usize, context: Option<String> },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("degenerate remainder for class {class:?}: {reason}")]
    DegenerateRemainder { class: Option<usize>, reason: String },

    #[error("empty feature selection")]
    EmptySelection,

    #[error("invalid fold count: {0}")]
    InvalidK(String),

    #[error("degenerate fold {fold}: class {class} keeps {retained} samples")]
    DegenerateFold { fold: usize, class: usize, retained: usize },

    #[error("no feasible candidate: every candidate failed with a singular covariance")]
    NoFeasibleCandidate,

    #[error("parse error at row {row}, column {column}: {message}")]
    ParseError { row: usize, column: usize, message: String },

    #[error("label column `{0}` not found")]
    MissingLabelColumn(String),

    #[error("class {class} has {available} samples, {requested} requested for training")]
    InsufficientClassSamples { class: i64, available: usize, requested: usize },

    #[error("invalid synthetic data spec: {0}")]
    SpecError(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("trajectory mismatch: {0}")]
    TrajectoryMismatch(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("i/o error: {0}")]
    Io(String),
}

fn context_suffix(context: &Option<String>) -> String {
    match context {
        Some(c) => format!(" ({c})"),
        None => String::new(),
    }
}

impl NpfsError {
    /// Short variant name, used in CLI diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            NpfsError::EmptyClass { .. } => "EmptyClass",
            NpfsError::NonFinite { .. } => "NonFinite",
            NpfsError::SingularCovariance { .. } => "SingularCovariance",
            NpfsError::LengthMismatch { .. } => "LengthMismatch",
            NpfsError::IndexOutOfRange { .. } => "IndexOutOfRange",
            NpfsError::DegenerateRemainder { .. } => "DegenerateRemainder",
            NpfsError::EmptySelection => "EmptySelection",
            NpfsError::InvalidK(_) => "InvalidK",
            NpfsError::DegenerateFold { .. } => "DegenerateFold",
            NpfsError::NoFeasibleCandidate => "NoFeasibleCandidate",
            NpfsError::ParseError { .. } => "ParseError",
            NpfsError::MissingLabelColumn(_) => "MissingLabelColumn",
            NpfsError::InsufficientClassSamples { .. } => "InsufficientClassSamples",
            NpfsError::SpecError(_) => "SpecError",
            NpfsError::SchemaMismatch(_) => "SchemaMismatch",
            NpfsError::TrajectoryMismatch(_) => "TrajectoryMismatch",
            NpfsError::InvalidDataset(_) => "InvalidDataset",
            NpfsError::InvalidConfig(_) => "InvalidConfig",
            NpfsError::InvalidModel(_) => "InvalidModel",
            NpfsError::Io(_) => "Io",
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            NpfsError::SingularCovariance { .. }
                | NpfsError::DegenerateRemainder { .. }
                | NpfsError::DegenerateFold { .. }
                | NpfsError::NoFeasibleCandidate
        )
    }

    pub(crate) fn with_context(self, ctx: impl Into<String>) -> Self {
        match self {
            NpfsError::SingularCovariance { class, context } => {
                let ctx = ctx.into();
                let context = Some(match context {
                    Some(inner) => format!("{ctx}, {inner}"),
                    None => ctx,
                });
                NpfsError::SingularCovariance { class, context }
            }
            other => other,
        }
    }
}

impl From<std::io::Error> for NpfsError {
    fn from(err: std::io::Error) -> Self {
        NpfsError::Io(err.to_string())
    }
}
