use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("overflow: {what} exceeds the floating range (threshold {threshold})")]
    Overflow { what: String, threshold: f64 },

    #[error("integral diverges: {0}")]
    Divergence(String),

    #[error("tolerance not met: achieved {achieved:e}, requested {requested:e}")]
    ToleranceNotMet { achieved: f64, requested: f64 },

    #[error("missing moment orders {orders:?}")]
    MissingMoments { orders: Vec<f64> },

    #[error("no epsilon value stored for q = {0}")]
    MissingEpsilon(f64),

    #[error("time {0} is not on the trajectory grid")]
    MissingTime(f64),

    #[error("degenerate fit: {0}")]
    FitDegenerate(String),

    #[error("time step too large: collision majorant {majorant} exceeds {limit}")]
    DtTooLarge { majorant: f64, limit: f64 },

    #[error("budget exceeded: projected {projected} pair tests, budget {budget}")]
    Budget { projected: f64, budget: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
