use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("improper transfer function: numerator degree {num_degree} exceeds denominator degree {den_degree}")]
    Improper { num_degree: usize, den_degree: usize },

    #[error("resolvent (jwI - A) is singular at omega = {omega} rad/s (imaginary-axis pole)")]
    SingularResolvent { omega: f64 },

    #[error("system is not stable (largest eigenvalue real part {max_real_part})")]
    Unstable { max_real_part: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid frequency sweep: {0}")]
    InvalidSweep(String),

    #[error("requested delay {tau} s exceeds delay line capacity {capacity} s")]
    DelayExceedsCapacity { tau: f64, capacity: f64 },

    #[error("delay line timestamps must be strictly increasing ({previous} then {next})")]
    NonMonotonicTime { previous: f64, next: f64 },

    #[error("ill-posed feedback loop: algebraic denominator {denominator} is (near) zero")]
    IllPosedLoop { denominator: f64 },

    #[error("wrapper not well-posed: m11 + m12*D_c = {value}")]
    WellPosedness { value: f64 },

    #[error("invalid synthesis target: {0}")]
    InvalidTarget(String),

    #[error("IF-OFP targets infeasible: product {product} must stay below {bound}")]
    Infeasible { product: f64, bound: f64 },

    #[error("synthesized M violates its constraint set: {0}")]
    ConstraintViolation(String),

    #[error("invalid configuration{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(message: impl Into<String>) -> Self {
        Error::Config {
            line: None,
            message: message.into(),
        }
    }
}
