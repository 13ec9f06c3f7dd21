use thiserror::Error;

/// Errors raised by the group, measure, environment and analysis layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("group model mismatch: {0}")]
    ModelMismatch(String),

    #[error("word length of {element} is beyond the table radius {radius} and no gauge fallback is enabled")]
    RadiusExceeded { element: String, radius: u32 },

    /// A support or memory budget was hit. `reached` is the partial progress
    /// (radius for balls, support size for convolutions, stream index for
    /// convolution streams).
    #[error("budget of {limit} atoms exceeded in {context} (reached {reached}); consider pruning")]
    Budget {
        limit: usize,
        reached: usize,
        context: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid environment: {0}")]
    Environment(String),

    #[error("cylinder {0} is unattainable from the origin")]
    UnattainableCylinder(String),

    #[error("integrity check failed: {0}")]
    Integrity(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn is_budget(&self) -> bool {
        matches!(self, Error::Budget { .. })
    }
}
