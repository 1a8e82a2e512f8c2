use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input lies outside the domain an operation accepts.
    #[error("domain error: {0}")]
    Domain(String),

    /// Quadrature, root finding or model fitting failed.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("cannot identify a risk distribution with c-statistic {target_c}: achievable range is ({lo:.6}, {hi:.6})")]
    Identification { target_c: f64, lo: f64, hi: f64 },

    /// Too many prior draws violated the regularity conditions.
    #[error("prior infeasible: {rejected} of {attempted} draws rejected")]
    PriorInfeasible { attempted: usize, rejected: usize },

    /// Too many Monte Carlo draws were flagged (separation, empty classes, ...).
    #[error("{what}: {flagged} of {total} draws flagged (limit {limit:.1}%)")]
    TooManyFlagged {
        what: String,
        flagged: usize,
        total: usize,
        limit: f64,
    },

    #[error("rule `{rule}` cannot be met for N <= {n_max}: {detail}")]
    Infeasible {
        rule: String,
        n_max: u64,
        detail: String,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
