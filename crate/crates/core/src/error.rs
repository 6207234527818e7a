use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("moment diverges: multiplicity nu = {nu} needs D > {} but D = {d}{}", 2 * nu, bracketed(context))]
    MomentDivergence { nu: u32, d: f64, context: String },

    #[error("odd number of slots ({0}); odd moments vanish identically")]
    OddMoment(usize),

    #[error("capacity exceeded: {what} = {requested} (limit {limit})")]
    Capacity {
        what: &'static str,
        requested: usize,
        limit: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("rotation tensor is not invertible: ln|det| = {log_abs_det} below ln({threshold})")]
    NotInvertible { log_abs_det: f64, threshold: f64 },

    #[error("quadrature did not reach tolerance: estimate {estimate}, error {error}")]
    Quadrature { estimate: f64, error: f64 },

    #[error("pole: {0}")]
    Pole(&'static str),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid model specification: {0}")]
    Specification(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn divergence(nu: u32, d: f64) -> Self {
        Error::MomentDivergence {
            nu,
            d,
            context: String::new(),
        }
    }

    /// Prefix a location to a divergence context; other variants pass through.
    pub(crate) fn with_context(self, ctx: impl FnOnce() -> String) -> Self {
        match self {
            Error::MomentDivergence { nu, d, context } => {
                let outer = ctx();
                let context = if context.is_empty() {
                    outer
                } else {
                    format!("{outer}, {context}")
                };
                Error::MomentDivergence { nu, d, context }
            }
            other => other,
        }
    }
}

fn bracketed(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(" ({context})")
    }
}
