use std::path::PathBuf;

use serde_json::{json, Value};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] robust_scatter_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Csv { path: PathBuf, message: String },
    #[error("{}: row {row}, column {column}: cannot parse {value:?} as a number", path.display())]
    Parse {
        path: PathBuf,
        /// 1-based data row, not counting the header.
        row: usize,
        /// 1-based column.
        column: usize,
        value: String,
    },
    #[error("{}: file has no data rows", path.display())]
    EmptyData { path: PathBuf },
    #[error("column {column} ({name:?}) is constant and cannot be standardized")]
    ConstantColumn { column: usize, name: String },
    #[error("{0}")]
    Usage(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(_) => "estimation",
            CliError::Io { .. } => "io",
            CliError::Csv { .. } => "csv",
            CliError::Parse { .. } => "parse",
            CliError::EmptyData { .. } => "empty_data",
            CliError::ConstantColumn { .. } => "constant_column",
            CliError::Usage(_) => "usage",
            CliError::Json(_) => "json",
        }
    }

    /// 2 for invalid invocations, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> Value {
        let mut detail = json!({});
        match self {
            CliError::Parse { row, column, value, .. } => {
                detail = json!({ "row": row, "column": column, "value": value });
            }
            CliError::ConstantColumn { column, name } => {
                detail = json!({ "column": column, "name": name });
            }
            CliError::Core(e) => {
                detail = json!({ "cause": format!("{e:?}") });
            }
            _ => {}
        }
        json!({
            "error": {
                "kind": self.kind(),
                "message": self.to_string(),
                "exit_code": self.exit_code(),
                "detail": detail,
            }
        })
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
