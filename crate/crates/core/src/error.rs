use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid hypothesis grid: {0}")]
    InvalidGrid(String),

    #[error("constrained search window is empty (lambda smaller than the grid step?)")]
    EmptyWindow,

    #[error("frame {frame}: no grid cell satisfies the coupled structure constraint")]
    ConstraintInfeasible { frame: usize },

    #[error("initialization infeasible: no border/lane pair on the grid satisfies the coupled structure constraint")]
    InitInfeasible,

    #[error("frame {got} out of sequence (expected {expected})")]
    FrameOrder { expected: usize, got: usize },

    #[error("frame {frame}: {source}")]
    AtFrame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Learning(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("window {0:?} lies outside the image")]
    WindowOutOfBounds([usize; 4]),

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn parse(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), line, msg: msg.into() }
    }

    /// Attaches a frame number unless the error already names one.
    pub fn at_frame(self, frame: usize) -> Self {
        match self {
            e @ (Error::ConstraintInfeasible { .. } | Error::FrameOrder { .. } | Error::AtFrame { .. }) => e,
            e => Error::AtFrame { frame, source: Box::new(e) },
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
