use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// Variants are grouped by the kind of failure rather than by module so that
/// the CLI can map them onto exit codes without inspecting messages.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unresolvable shell: {0}")]
    Unresolvable(String),

    #[error("aliasing: {0}")]
    Aliasing(String),

    #[error("wrap-around: {0}")]
    WrapAround(String),

    #[error("under-resolved: {0}")]
    UnderResolved(String),

    #[error("elliptic solve did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("smallness violated: sup |n| = {sup} > {threshold}")]
    Smallness { sup: f64, threshold: f64 },

    #[error("vacuum guard tripped: min(1 + n) = {min_density} <= {threshold}")]
    Vacuum { min_density: f64, threshold: f64 },
}

impl Error {
    /// True for failures of a numeric guard (as opposed to bad input).
    pub fn is_numeric_guard(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::NonFinite(_)
                | Error::Vacuum { .. }
                | Error::Smallness { .. }
                | Error::WrapAround(_)
                | Error::Aliasing(_)
                | Error::UnderResolved(_)
                | Error::NoRoot(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
