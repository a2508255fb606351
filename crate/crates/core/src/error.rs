use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("{path}: line {line}: non-finite sample value {value:?}")]
    Data { path: String, line: usize, value: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot scale record `{0}`: all samples are zero")]
    Scaling(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure: {message} (after {iterations} iterations)")]
    Numerical { message: String, iterations: usize },

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn numerical(msg: impl Into<String>, iterations: usize) -> Self {
        Error::Numerical {
            message: msg.into(),
            iterations,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
