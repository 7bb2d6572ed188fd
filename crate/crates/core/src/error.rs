use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// One or more configuration invariants are violated. Every violation is
    /// listed, not only the first one found.
    #[error("configuration error: {}", .0.join("; "))]
    Config(Vec<String>),

    /// An operation was called outside its precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested quantity is not known for this motion.
    #[error("{0} is not available for this motion")]
    Unavailable(String),

    /// Importance weights collapsed onto too few paths.
    #[error("effective sample size {ess:.2} is below the minimum of 10")]
    LowEffectiveSampleSize { ess: f64 },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(vec![msg.into()])
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Collects violations and turns them into a single [`Error::Config`].
#[derive(Debug, Default)]
pub(crate) struct Violations(Vec<String>);

impl Violations {
    pub fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.0.push(msg());
        }
    }

    pub fn push(&mut self, msg: impl Into<String>) {
        self.0.push(msg.into());
    }

    pub fn into_result(self) -> Result<()> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(self.0))
        }
    }
}
