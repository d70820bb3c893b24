use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("structural error: {0}")]
    Structure(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("unknown node {0}")]
    UnknownNode(usize),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("matrix square root failed: {0}")]
    SquareRoot(String),

    #[error("degenerate column {0}: zero standard deviation")]
    DegenerateColumn(usize),

    #[error(
        "window has {t} samples for {n} nodes; at least as many samples as nodes are required"
    )]
    ShortWindow { n: usize, t: usize },

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("missing calibration: {0}")]
    MissingCalibration(String),

    #[error("scenario {label}: {source}")]
    Scenario {
        label: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn in_scenario(self, label: impl Into<String>) -> Self {
        Error::Scenario {
            label: label.into(),
            source: Box::new(self),
        }
    }
}
