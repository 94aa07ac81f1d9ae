use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A hard size limit was hit. `generated` is how far the computation got.
    #[error("resource guard: {what} exceeded limit {limit} (generated {generated})")]
    ResourceGuard {
        what: String,
        limit: u64,
        generated: u64,
    },

    #[error("lattice coordinate out of range: {0}")]
    Overflow(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
