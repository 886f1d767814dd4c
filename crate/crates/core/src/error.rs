use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Wrong channel semantics, bad magic bytes, or otherwise unusable data.
    #[error("format error: {0}")]
    Format(String),

    /// Text or binary input that violates a type invariant. `line` is 1-based
    /// for text formats and a byte offset for binary ones.
    #[error("parse error at {location}: {message}")]
    Parse { location: Location, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate fusion weights: event {event} + rgb {rgb} must be positive")]
    DegenerateWeights { event: f64, rgb: f64 },

    /// Argument outside the domain where a loss is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A NaN or infinity showed up in a result.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("empty mask: {0}")]
    EmptyMask(&'static str),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid config: {0}")]
    Config(String),

    /// Error raised inside a named pipeline stage.
    #[error("stage `{stage}` failed")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    Offset(usize),
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Location::Line(n) => write!(f, "line {n}"),
            Location::Offset(n) => write!(f, "byte offset {n}"),
        }
    }
}

impl Error {
    pub(crate) fn parse_line(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            location: Location::Line(line),
            message: message.into(),
        }
    }

    pub(crate) fn parse_offset(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            location: Location::Offset(offset),
            message: message.into(),
        }
    }

    /// Attach a pipeline stage name.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True when a NaN or infinity caused the failure.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_numerical(),
            Error::NonFinite(_) => true,
            _ => false,
        }
    }

    /// True for errors caused by bad user input (as opposed to numerical trouble).
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_input_error(),
            Error::Domain(_) | Error::NonFinite(_) => false,
            _ => true,
        }
    }
}
