use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("compute queue unstable: rho = {rho} (lambda_c = {lambda_c}, mu_c = {mu_c})")]
    Unstable { rho: f64, lambda_c: f64, mu_c: f64 },

    #[error("quadrature did not converge on [{lo}, {hi}]: estimate {estimate}, error {error_estimate} after {intervals} intervals")]
    Quadrature {
        lo: f64,
        hi: f64,
        estimate: f64,
        error_estimate: f64,
        intervals: usize,
    },

    #[error("no data: {0}")]
    Empty(String),

    #[error("not computable: {0}")]
    NotComputable(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
