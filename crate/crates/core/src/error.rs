use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported distribution family: {0}")]
    UnsupportedFamily(String),

    #[error("{what} did not converge after {terms} terms")]
    Convergence { what: &'static str, terms: usize },

    #[error("quadrature did not converge: estimate {estimate}, error estimate {error}")]
    Quadrature { estimate: f64, error: f64 },

    #[error("conditioning on a null event: {0}")]
    ConditioningOnNull(&'static str),

    #[error("mean functional time is infinite (hack probability per cycle is zero)")]
    InfiniteMean,

    #[error("replication exceeded the cycle cap of {cap} cycles")]
    Runaway { cap: u64 },

    #[error("grid step {step} too coarse: cycle law puts {jump} mass in one cell")]
    Resolution { step: f64, jump: f64 },

    #[error("time {t} is beyond the grid horizon {horizon}")]
    HorizonExceeded { t: f64, horizon: f64 },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error("at {point}: {source}")]
    AtSweepPoint {
        point: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn at(point: impl Into<String>, source: Error) -> Self {
        Error::AtSweepPoint { point: point.into(), source: Box::new(source) }
    }

    /// True for errors caused by bad input rather than numerics.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Parse { .. } | Error::Config(_) | Error::UnsupportedFamily(_) | Error::Io(_) | Error::Csv(_) => true,
            Error::AtSweepPoint { source, .. } => source.is_usage(),
            _ => false,
        }
    }
}
