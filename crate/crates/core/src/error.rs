use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({x}, {y}) is outside the closed domain")]
    DomainMembership { x: f64, y: f64 },

    #[error("point ({x}, {y}) lies in the stop-set collar (T0 = {t0})")]
    StopSetProximity { x: f64, y: f64, t0: f64 },

    #[error("invalid time function: {0}")]
    TimeFunctionInvalid(String),

    #[error("causality violated at ({x}, {y}): <c, grad T0> = {dot}")]
    CausalityViolation { x: f64, y: f64, dot: f64 },

    #[error("integration failed: {0}")]
    IntegrationFailure(String),

    #[error("geometry inconsistency: {0}")]
    GeometryInconsistency(String),

    #[error("degenerate pair: the two arguments coincide in L1")]
    DegeneratePair,

    #[error("characteristics cross at (t = {t}, s = {s}): oriented det = {det}")]
    CharacteristicCrossing { t: f64, s: f64, det: f64 },

    #[error("invalid bounds: {0}")]
    InvalidBounds(String),

    #[error(
        "stripe {stripe} did not contract after {iterations} iterations \
         (last update {update:e}, measured ratio {ratio})"
    )]
    ContractionFailure {
        stripe: usize,
        iterations: usize,
        update: f64,
        ratio: f64,
    },

    #[error("Picard iteration did not converge in {iterations} iterations (last update {update:e})")]
    MaxIterations { iterations: usize, update: f64 },

    #[error("audit failed: {0}")]
    AuditFailed(String),

    #[error("invalid mask: {0}")]
    MaskInvalid(String),

    #[error("malformed PGM at byte offset {offset}: {message}")]
    Pgm { offset: usize, message: String },

    #[error("malformed grid file: {0}")]
    GridFormat(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("boundary data evaluation failed: {0}")]
    BoundaryData(String),

    #[error("at pixel ({col}, {row}): {source}")]
    AtPixel {
        col: usize,
        row: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors raised by requirement audits rather than by the numerics.
    pub fn is_audit(&self) -> bool {
        match self {
            Error::AuditFailed(_) | Error::CausalityViolation { .. } | Error::MaskInvalid(_) => true,
            Error::AtPixel { source, .. } => source.is_audit(),
            _ => false,
        }
    }
}
