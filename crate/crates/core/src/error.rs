use thiserror::Error;

/// Failures surfaced by the synthesis and simulation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(
        "truncation insufficient: modes must reach below mu = {required_mu:.6e}, \
         but the smallest retained eigenvalue is {smallest_mu:.6e}; increase K"
    )]
    Truncation { required_mu: f64, smallest_mu: f64 },

    #[error("discriminant {0:.3e} is negative beyond round-off; parameters are corrupted")]
    Discriminant(f64),

    #[error("assumption check failed: {0}")]
    Assumption(String),

    #[error("singular synthesis: {0}")]
    Singular(String),

    #[error(
        "divergence at step {step} (t = {time:.6}): state norm {norm:.3e} exceeds {limit:.3e}"
    )]
    Divergence {
        step: usize,
        time: f64,
        norm: f64,
        limit: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
