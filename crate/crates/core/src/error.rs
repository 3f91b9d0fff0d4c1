use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("duplicate result for dataset `{dataset}` and config `{config_id}`")]
    Duplicate { dataset: String, config_id: String },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("configuration space exhausted for dataset `{dataset}`")]
    Exhausted { dataset: String },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("no metafeatures registered for dataset `{dataset}`")]
    MissingMetafeatures { dataset: String },
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("SGD diverged (non-finite parameter) with learning rate {learning_rate}")]
    Divergence { learning_rate: f64 },
    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T> = core::result::Result<T, Error>;
