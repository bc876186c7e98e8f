use thiserror::Error;

use crate::complex::Simplex;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{face} is not a codimension-1 face of {coface}")]
    NotAFace { face: Simplex, coface: Simplex },

    #[error("vertex list {0:?} is not strictly increasing")]
    UnsortedVertices(Vec<u64>),

    #[error("simplex {0} is not in the complex")]
    UnknownSimplex(Simplex),

    #[error("weight {weight} of {simplex} is not strictly positive")]
    NonPositiveWeight { simplex: Simplex, weight: f64 },

    #[error("complex is not closed under faces: {face} missing below {simplex}")]
    NotFaceClosed { simplex: Simplex, face: Simplex },

    #[error("duplicate simplex {0}")]
    DuplicateSimplex(Simplex),

    #[error("degree mismatch: expected {expected}, found {found}")]
    DegreeMismatch { expected: isize, found: isize },

    #[error("boundary of a degree-{0} cochain leaves the complex")]
    DegreeUnderflow(isize),

    #[error("degree {0} out of range for this complex")]
    DegreeOutOfRange(isize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e}, condition estimate {condition:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        condition: f64,
    },

    #[error(
        "singular system: right-hand side has relative kernel component {kernel_projection:.3e}"
    )]
    Singular { kernel_projection: f64 },

    #[error("{0} has no coface")]
    NoCoface(Simplex),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
