use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Fewer than three non-collinear points, or an otherwise zero-area input.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("duplicate sites at indices {first} and {second}")]
    DuplicateSite { first: usize, second: usize },

    #[error("point {index} at ({x}, {y}) is not strictly inside the boundary")]
    Containment { index: usize, x: f64, y: f64 },

    #[error("frame alignment: {0}")]
    FrameAlignment(String),

    #[error("shear field is empty")]
    EmptyField,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Mechanical (telemetry) values of a calibration sweep are not strictly increasing.
    #[error("calibration protocol error at sample {index}: {reason}")]
    Protocol { index: usize, reason: String },

    /// Raw sensor values of a calibration sweep decrease at `index`.
    #[error(
        "calibration quality error: raw value at sample {index} ({value}) is below the previous sample ({previous})"
    )]
    CalibrationQuality {
        index: usize,
        value: f64,
        previous: f64,
    },

    #[error("value {value} outside calibrated range [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },

    #[error("scenario infeasible: {0}")]
    ScenarioInfeasible(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unit mismatch: {0}")]
    Unit(String),

    #[error("frame {index}: {source}")]
    AtFrame { index: usize, source: Box<Error> },
}

impl Error {
    pub fn at_frame(self, index: usize) -> Self {
        Error::AtFrame {
            index,
            source: Box::new(self),
        }
    }

    /// Strips any frame-index wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtFrame { source, .. } => source.root(),
            other => other,
        }
    }
}
