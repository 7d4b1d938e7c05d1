use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("{0}")]
    Domain(String),

    #[error("no training runs supplied")]
    EmptyRuns,

    #[error("unidentifiable coefficients: {0}")]
    Unidentifiable(String),

    #[error("dense fit requires G=E=1 runs")]
    DenseRequiresUnitGranularity,

    #[error("unreachable by dense: target loss {target} is at or below the dense asymptote {asymptote}")]
    UnreachableByDense { target: f64, asymptote: f64 },

    #[error("no finite objective value on any granularity in the grid")]
    NoFiniteSolution,

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("schema: {0}")]
    Schema(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Stable machine-greppable code printed as the prefix of CLI errors.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain(_) => "E_DOMAIN",
            Error::EmptyRuns => "E_EMPTY",
            Error::Unidentifiable(_) => "E_UNIDENTIFIABLE",
            Error::DenseRequiresUnitGranularity => "E_DENSE_RUNS",
            Error::UnreachableByDense { .. } => "E_UNREACHABLE",
            Error::NoFiniteSolution => "E_NONFINITE",
            Error::Parse { .. } => "E_PARSE",
            Error::Schema(_) => "E_SCHEMA",
            Error::Io(_) => "E_IO",
            Error::Csv(_) => "E_CSV",
            Error::Json(_) => "E_JSON",
        }
    }
}

pub(crate) fn ensure_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive and finite, got {value}")))
    }
}

pub(crate) fn ensure_nonnegative(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be nonnegative and finite, got {value}")))
    }
}

pub(crate) fn ensure_at_least_one(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be >= 1, got {value}")))
    }
}
