use thiserror::Error;

use crate::solver::SolveTrace;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {actual})")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{0}")]
    Domain(String),

    #[error("line search failed after {backtracks} backtracks at layer {layer}")]
    LineSearch {
        layer: usize,
        backtracks: usize,
        trace: Box<SolveTrace>,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            actual,
        })
    }
}
