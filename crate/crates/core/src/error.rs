//! Crate-wide error and warning types.

use thiserror::Error;

/// Errors raised by the statistical modules.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the stated domain of a function.
    #[error("domain error in {context}: {message}")]
    Domain { context: &'static str, message: String },

    /// A series expansion or iteration failed to converge.
    #[error("convergence failure in {context}: {message}")]
    Convergence { context: &'static str, message: String },

    /// A second moment does not exist for the requested kernel.
    #[error("divergent moment: {0}")]
    DivergentMoment(String),

    /// The covariance matrix of the transformed values is singular or
    /// numerically indistinguishable from singular.
    #[error("singular covariance matrix: {0}")]
    SingularCovariance(String),

    /// No closed-form product measure is available for this kernel pair.
    #[error("unsupported kernel combination: {0}")]
    UnsupportedCombination(String),

    /// The lower window edge lies below the admissible limit for the
    /// truncated probitnormal score kernels.
    #[error("window too low: alpha1 = {alpha1} < {limit}")]
    WindowTooLow { alpha1: f64, limit: f64 },

    /// The regressor second-moment matrix cannot be inverted, typically
    /// because no tail events occurred in the sample.
    #[error("singular regressor matrix: {0}")]
    SingularH(String),

    /// A likelihood maximization stalled before reaching the step tolerance.
    #[error("optimization failure: {0}")]
    OptimizationFailure(String),

    /// Not enough usable observations for the requested test or fit.
    #[error("insufficient data: need {needed}, have {have}")]
    InsufficientData { needed: usize, have: usize },

    /// A record is missing fields required by the operation.
    #[error("missing fields: {0}")]
    MissingFields(String),

    /// A CSV row could not be parsed.
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    /// The CSV header does not match the expected schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// The nonlinear least-squares fit did not converge.
    #[error("fit failure: {0}")]
    FitFailure(String),

    /// I/O error while reading input data.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(context: &'static str, message: impl Into<String>) -> Self {
        Error::Domain { context, message: message.into() }
    }
}

/// Non-fatal conditions attached to test results.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Warning {
    /// Every transformed value in the sample is identical, e.g. because all
    /// PIT values fall below the kernel window.
    DegenerateSample,
    /// The kernel covariance matrix is poorly conditioned.
    IllConditionedCovariance,
}

pub type Result<T> = std::result::Result<T, Error>;
