use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in `{argument}`: expected {expected}, found {found}")]
    DimensionMismatch {
        argument: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid too small: maximizer lies on the lattice boundary")]
    GridTooSmall,

    #[error("path must vanish at the terminal time (found |r(T)| = {0})")]
    NonzeroTerminal(f64),

    #[error("trajectories do not share the terminal slice")]
    TerminalSliceMismatch,

    #[error(
        "small-time condition violated: lhs {lhs} >= rhs {rhs} (pass an override to solve anyway)"
    )]
    ConditionViolated { lhs: f64, rhs: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(argument: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            argument,
            expected,
            found,
        })
    }
}
