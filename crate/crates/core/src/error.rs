use crate::adapt::IntegralEstimate;

/// Errors raised by the simulation library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{name} out of domain: {value}")]
    Domain { name: &'static str, value: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("refinement exceeded depth {max_depth} on [{t_l}, {t_r}]")]
    DepthExceeded {
        max_depth: usize,
        t_l: f64,
        t_r: f64,
        partial: Box<IntegralEstimate>,
    },

    #[error("conditional variance {var} is negative beyond round-off (second moment {m2})")]
    NegativeVariance { var: f64, m2: f64 },

    #[error("closed-form log integral of phi^-2 ({closed}) disagrees with quadrature ({quadrature})")]
    ClosedFormMismatch { closed: f64, quadrature: f64 },

    #[error("numerical solver failed: {0}")]
    NoConvergence(String),

    #[error("cannot write {}", path.display())]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(name: &'static str, value: f64) -> Error {
    Error::Domain { name, value }
}
