use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A loss, residual or gradient evaluated to a non-finite value.
    #[error("diverged evaluation{}", match .point { Some(p) => format!(" at point {p}"), None => String::new() })]
    Diverged { point: Option<usize> },

    #[error("near-singular extension |c| = {value:e} at point {point}")]
    NearSingularExtension { point: usize, value: f64 },

    /// The barrier margin has entered the forbidden buffer zone `margin <= depth`.
    #[error("margin {margin:e} inside barrier buffer of depth {depth}")]
    InsideBuffer { margin: f64, depth: f64 },

    #[error("insufficient peaks: found {found} local maxima, need at least 2")]
    InsufficientPeaks { found: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
