use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification of failures, used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("duplicate (text, annotator) pairs at data rows: {}", format_duplicates(.0))]
    Duplicate(Vec<DuplicatePair>),

    #[error("parse error at data row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("dataset is empty after {0}")]
    EmptyDataset(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("unknown category `{value}` for attribute `{attribute}`")]
    UnknownCategory { attribute: String, value: String },

    #[error("embedding format error at row {row}: {message}")]
    Format { row: usize, message: String },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("batch plan error: {0}")]
    Plan(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing {kind} for key `{key}`")]
    Coverage { kind: &'static str, key: String },

    #[error("operation requires the socio_contrastive variant, got {0}")]
    UnsupportedVariant(String),

    #[error("cannot evaluate an empty prediction set")]
    EmptyEval,

    #[error("roc-auc is undefined when labels contain a single class")]
    UndefinedAuc,

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("run for seed {seed} failed: {source}")]
    Run {
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

/// One offending duplicate: the 1-based data rows sharing a (text, annotator) key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DuplicatePair {
    pub text_id: String,
    pub annotator_id: String,
    pub rows: Vec<usize>,
}

fn format_duplicates(pairs: &[DuplicatePair]) -> String {
    pairs
        .iter()
        .map(|p| {
            let rows: Vec<String> = p.rows.iter().map(|r| r.to_string()).collect();
            format!("({}, {}) rows {}", p.text_id, p.annotator_id, rows.join(","))
        })
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Parameter(_) | Error::UnsupportedVariant(_) => {
                ErrorKind::Config
            }
            Error::Numeric(_) => ErrorKind::Numeric,
            Error::Run { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }
}
