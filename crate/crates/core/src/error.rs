use crate::anatomy::{FrameId, PointId};
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("body `{body}`: {visible} visible markers, at least 3 required")]
    InsufficientMarkers { body: String, visible: usize },

    #[error("body `{body}`: fit rejected, rms residual {rms_mm:.4} mm exceeds {limit_mm} mm")]
    FitRejected {
        body: String,
        rms_mm: f64,
        limit_mm: f64,
    },

    #[error("invalid rigid body definition: {0}")]
    InvalidRigidBody(String),

    #[error("no landmark entry for point {0}")]
    UnknownPoint(PointId),

    #[error("frame {0} is not available")]
    MissingFrame(FrameId),

    #[error("invalid bone vector: {0}")]
    InvalidBoneVector(String),

    #[error("degenerate projection: {0}")]
    DegenerateProjection(String),

    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),

    #[error("time {t} s is outside the trajectory range [{start}, {end}] s")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("parse error at line {line}, column {column}: {reason}")]
    Parse {
        line: u64,
        column: usize,
        reason: String,
    },

    #[error("time went backwards: {current} s follows {previous} s (line {line})")]
    NonMonotonicTime {
        previous: f64,
        current: f64,
        line: u64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable identifier, shared by the CLI error output and
    /// the C status codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DegenerateGeometry(_) => "DegenerateGeometry",
            Error::InsufficientMarkers { .. } => "InsufficientMarkers",
            Error::FitRejected { .. } => "FitRejected",
            Error::InvalidRigidBody(_) => "InvalidRigidBody",
            Error::UnknownPoint(_) => "UnknownPoint",
            Error::MissingFrame(_) => "MissingFrame",
            Error::InvalidBoneVector(_) => "InvalidBoneVector",
            Error::DegenerateProjection(_) => "DegenerateProjection",
            Error::InvalidParams(_) => "InvalidParams",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::Parse { .. } => "ParseError",
            Error::NonMonotonicTime { .. } => "NonMonotonicTime",
            Error::Config(_) => "ConfigError",
            Error::Io(_) => "IoError",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
