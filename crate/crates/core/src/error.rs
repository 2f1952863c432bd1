use thiserror::Error;

use crate::outcome::Outcome;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix entries must be finite")]
    NotFinite,
    #[error("expected {expected} entries for a {rows}x{cols} matrix, found {found}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        expected: usize,
        found: usize,
    },
    #[error("matrix must be square, found {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not Hermitian (relative asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },
    #[error("matrix is not positive semidefinite (minimum eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("trace must equal one, found {trace}")]
    TraceNotOne { trace: f64 },
    #[error("columns are not orthonormal (Gram defect {gram_defect:.3e})")]
    NotIsometry { gram_defect: f64 },
    #[error("coupling is not unitary (defect {defect:.3e})")]
    NotUnitary { defect: f64 },
    #[error("zero vector cannot be normalized")]
    ZeroVector,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("outcome label must be a finite number, found {0}")]
    InvalidLabel(String),
    #[error("duplicate outcome label {0}")]
    DuplicateLabel(Outcome),
    #[error("probability {probability} outside [0, 1] for outcome {label}")]
    ProbabilityOutOfRange { label: Outcome, probability: f64 },
    #[error("probabilities sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("POVM element for outcome {label} is not positive (minimum eigenvalue {min_eigenvalue:.3e})")]
    PovmNotPsd { label: Outcome, min_eigenvalue: f64 },
    #[error("POVM elements do not sum to the identity (Frobenius defect {defect:.3e})")]
    PovmUnity { defect: f64 },
    #[error("operation is trace-increasing (minimum eigenvalue of I - effect {min_eigenvalue:.3e})")]
    TraceIncreasing { min_eigenvalue: f64 },
    #[error("instrument is not trace-preserving (unity defect {defect:.3e})")]
    InstrumentUnity { defect: f64 },
    #[error("an operation needs at least one Kraus operator")]
    EmptyKraus,
    #[error("collection of outcomes must not be empty")]
    EmptyOutcomes,
    #[error("map is not Hermiticity-preserving (defect {defect:.3e})")]
    NotHermiticityPreserving { defect: f64 },
    #[error("outcome {label} has probability {probability:.3e}; the post-measurement state is indefinite")]
    ZeroProbability { label: Outcome, probability: f64 },
    #[error("observable is degenerate: eigenvalue {eigenvalue} has multiplicity {multiplicity}")]
    DegenerateObservable { eigenvalue: f64, multiplicity: usize },
    #[error("measurement times must be positive and strictly increasing (step {step}: {time})")]
    NonIncreasingTimes { step: usize, time: f64 },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl Error {
    /// Parse, schema, and I/O problems are input-format failures; everything
    /// else is a validation failure of well-formed input.
    pub fn is_parse_failure(&self) -> bool {
        matches!(self, Error::Parse { .. } | Error::Schema(_) | Error::Io(_))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            column: e.column(),
            // serde_json appends the location, which is reported separately
            message: match e.to_string().rsplit_once(" at line ") {
                Some((head, _)) if e.line() > 0 => head.to_string(),
                _ => e.to_string(),
            },
        }
    }
}
