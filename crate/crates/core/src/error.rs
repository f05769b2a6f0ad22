use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("simulation fault at t = {t} s: {reason}")]
    SimulationFault { t: f64, reason: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("controller fault: {0}")]
    ControllerFault(String),

    #[error("plant did not settle within {0} s")]
    NotSettled(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("trace error: {0}")]
    Trace(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
