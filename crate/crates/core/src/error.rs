use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("index order violated: {0}")]
    IndexOrder(String),

    #[error("source path too short: time change needs u_max >= {required_u_max}, path ends at {available}")]
    SourceTooShort { required_u_max: f64, available: f64 },

    #[error("horizon {horizon} exceeds grid end {grid_end}")]
    HorizonOverflow { horizon: f64, grid_end: f64 },

    #[error("test function `{name}` is not in {class}: {detail}")]
    FunctionClass {
        name: String,
        class: &'static str,
        detail: String,
    },

    #[error("cost guard: {0}")]
    CostGuard(String),

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
