use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid local dimension {0} (must be at least 2)")]
    InvalidDimension(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("trace is not one (got {0})")]
    InvalidTrace(f64),

    #[error("unknown event label `{0}`")]
    UnknownEvent(String),

    #[error("invalid event selection: {0}")]
    InvalidSelection(String),

    #[error("parts `{first}` and `{second}` are incompatible (max deviation {deviation:.3e})")]
    Incompatible {
        first: String,
        second: String,
        deviation: f64,
    },

    #[error("size cap exceeded: {0}")]
    SizeCap(String),

    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),

    #[error("channel is not trace preserving (residual {0:.3e})")]
    NotTracePreserving(f64),

    #[error("no marginal channel exists (factorization residual {0:.3e})")]
    NoMarginalChannel(f64),

    #[error("free tensor violates the marginal constraints at index {0:?}")]
    ConstrainedSupport(Vec<usize>),

    #[error("graph is not chordal")]
    NotChordal,

    #[error("zero separator weight with nonzero clique weight {0:.3e}")]
    ZeroSeparator(f64),

    #[error("invalid projector set: {0}")]
    InvalidProjectors(String),

    #[error("no steady state: {0}")]
    NoSteadyState(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
