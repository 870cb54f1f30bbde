use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("power iteration did not converge within {0} iterations")]
    PowerIteration(usize),

    #[error("solver diverged: non-finite objective at iteration {0}")]
    Diverged(usize),

    #[error("bracket expansion failed after {0} doublings")]
    BracketExpansion(usize),

    #[error("empty credible interval for region {0}")]
    EmptyInterval(usize),

    #[error("too few samples: have {have}, need at least {need}")]
    TooFewSamples { have: usize, need: usize },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Numerical failures (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::PowerIteration(_)
                | Error::Diverged(_)
                | Error::BracketExpansion(_)
                | Error::EmptyInterval(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
