use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error classes, used by the command-line driver to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("missing variable `{0}`")]
    MissingVariable(String),

    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("location ({lat}, {lon}) is outside the grid domain")]
    OutOfDomain { lat: f64, lon: f64 },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("no valid raster value near ({lat}, {lon})")]
    NoData { lat: f64, lon: f64 },

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("height mismatch: raster at {raster} m, series at {series} m")]
    HeightMismatch { raster: f64, series: f64 },

    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("cannot impute {0}: no complete records")]
    ImputationImpossible(String),

    #[error("ambiguous match for `{name}`: candidates {candidates:?}")]
    AmbiguousMatch { name: String, candidates: Vec<String> },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),

    #[error("record `{id}`: {source}")]
    Record {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn for_record(self, id: &str) -> Self {
        Error::Record {
            id: id.to_owned(),
            source: Box::new(self),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::MissingPrerequisite(_) => ErrorKind::Config,
            Error::Internal(_) | Error::Json(_) => ErrorKind::Internal,
            Error::Record { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }
}
