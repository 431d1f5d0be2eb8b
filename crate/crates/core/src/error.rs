use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("Cox fit did not converge after {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    NotConverged { iterations: usize, gradient_norm: f64 },

    #[error("information matrix is singular")]
    SingularInformation,

    #[error("subject {0} is in-bag for every tree; grow more trees")]
    NoOutOfBagTrees(usize),

    #[error("bootstrap produced {succeeded} usable replicates out of {requested}")]
    BootstrapFailed { succeeded: usize, requested: usize },

    #[error("line {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
