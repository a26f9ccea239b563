use thiserror::Error;

/// Errors raised anywhere in the simulator and analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("operator list is empty")]
    EmptyOperators,

    #[error("Kraus operators are not trace preserving (max deviation {0:e})")]
    ChannelNotTracePreserving(f64),

    #[error("POVM effects do not resolve the identity (max deviation {0:e})")]
    PovmIncomplete(f64),

    #[error("POVM has {found} outcomes, at most {max} are supported")]
    TooManyOutcomes { found: usize, max: usize },

    #[error("outcome {0} has vanishing probability")]
    ZeroProbabilityOutcome(usize),

    #[error("outcome index {index} out of range for {outcomes} outcomes")]
    OutcomeOutOfRange { index: usize, outcomes: usize },

    #[error("Bloch vector has norm {0}, outside the unit ball")]
    InvalidState(f64),

    #[error("affine map sends a boundary point to norm {0}, outside the unit ball")]
    NotContracting(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("enumeration needs {required} terms, cap is {cap}")]
    Explosion { required: f64, cap: f64 },

    #[error("no candidate string passes the likelihood threshold")]
    EmptyCandidateSet,

    #[error("transport error: {0}")]
    Transport(String),

    #[error("protocol version mismatch: expected {expected}, peer sent {found}")]
    VersionMismatch { expected: u8, found: u8 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
