use thiserror::Error;

/// Problems with a scenario file, before anything is integrated.
#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, column {column}, at `{field}`: {message}")]
    Parse {
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("unknown bundled scenario `{0}`")]
    UnknownBundled(String),
}

impl From<naim_core::Error> for ScenarioError {
    fn from(e: naim_core::Error) -> Self {
        ScenarioError::Invalid(e.to_string())
    }
}
