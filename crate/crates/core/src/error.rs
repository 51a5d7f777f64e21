use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry violation: {0}")]
    Geometry(String),

    #[error("meshing failed in {region}: {reason}")]
    Meshing { region: String, reason: String },

    #[error("tiling error: {0}")]
    Tiling(String),

    #[error("conformity error: {0}")]
    Conformity(String),

    #[error("invalid conductivity tensor: {0}")]
    InvalidTensor(String),

    #[error("mesh has no boundary edges tagged {0}")]
    MissingTag(String),

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("point ({x}, {y}) is not covered by the mesh")]
    PointNotFound { x: f64, y: f64 },

    #[error("field mismatch: {0}")]
    FieldMismatch(String),

    #[error("missing periodic pairing: {0}")]
    Periodicity(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid initial data: {0}")]
    InitialData(String),

    #[error("non-finite {field} at t = {time} (vertex {index})")]
    NonFinite {
        field: &'static str,
        time: f64,
        index: usize,
    },

    #[error("sample mismatch: {0}")]
    SampleMismatch(String),

    #[error("config line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("config: {0}")]
    ConfigValidation(String),

    #[error("expression `{input}`: {message}")]
    Expression { input: String, message: String },

    #[error("convergence study needs at least one epsilon")]
    EmptyStudy,

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    /// Short category used by the command line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Geometry(_)
            | Error::Meshing { .. }
            | Error::Tiling(_)
            | Error::Conformity(_)
            | Error::PointNotFound { .. } => "geometry",
            Error::InvalidTensor(_)
            | Error::MissingTag(_)
            | Error::FieldMismatch(_)
            | Error::Periodicity(_) => "fem",
            Error::NonConvergence { .. } | Error::NonFinite { .. } => "solver",
            Error::InvalidParameter(_) | Error::InitialData(_) | Error::SampleMismatch(_) => {
                "model"
            }
            Error::ConfigParse { .. }
            | Error::ConfigValidation(_)
            | Error::Expression { .. }
            | Error::EmptyStudy => "config",
            Error::Io { .. } | Error::Json { .. } | Error::Csv { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
