use std::fmt;

use thiserror::Error;

use crate::spmv::ExecMode;

pub type Result<T, E = SpmvError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SpmvError {
    #[error("triplet #{index} ({row}, {col}) is outside a {nrows}x{ncols} matrix")]
    TripletOutOfRange {
        index: usize,
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },

    #[error("invalid ownership map: {0}")]
    InvalidOwnership(String),

    #[error("rank {rank} is out of range for {ranks} rank(s)")]
    RankOutOfRange { rank: usize, ranks: usize },

    #[error("{what}: expected length {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("rank {rank} lists global column {column} as a ghost but owns it")]
    GhostOwnedLocally { rank: usize, column: usize },

    #[error("rank {rank} received a request for global row {row} it does not own")]
    ForeignRequest { rank: usize, row: usize },

    #[error("rank {rank} attempted to send to itself")]
    SelfSend { rank: usize },

    #[error("rank {rank} timed out in {op} waiting on {}", peer.map_or("the collective".to_string(), |p| format!("rank {p}")))]
    Stalled {
        rank: usize,
        peer: Option<usize>,
        op: &'static str,
    },

    #[error("rank {rank} stopped waiting because another rank failed")]
    PeerFailed { rank: usize },

    #[error("rank {rank}: message endpoint to rank {peer} is closed")]
    Disconnected { rank: usize, peer: usize },

    #[error("rank {rank}: expected {expected} payload from rank {peer}")]
    UnexpectedPayload {
        rank: usize,
        peer: usize,
        expected: &'static str,
    },

    #[error("{mode} mode needs at least 2 workers per rank, got {workers}")]
    TooFewWorkers { mode: ExecMode, workers: usize },

    #[error("diagonal entry of global row {row} is missing")]
    MissingDiagonal { row: usize },

    #[error("diagonal entry of global row {row} is zero")]
    ZeroDiagonal { row: usize },

    #[error("solver produced a non-finite value at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("infeasible generator parameters: {0}")]
    Infeasible(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("record {0} has zero or non-finite spmv time")]
    ZeroTime(usize),

    #[error("{}", RankFailureList(.0))]
    RankFailures(Vec<(usize, SpmvError)>),
}

struct RankFailureList<'a>(&'a [(usize, SpmvError)]);

impl fmt::Display for RankFailureList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} rank(s) failed:", self.0.len())?;
        for (rank, err) in self.0 {
            write!(f, " [rank {rank}: {err}]")?;
        }
        Ok(())
    }
}

impl SpmvError {
    /// True when this error, or any per-rank error it aggregates, is a stall.
    pub fn is_stall(&self) -> bool {
        match self {
            SpmvError::Stalled { .. } => true,
            SpmvError::RankFailures(list) => list.iter().any(|(_, e)| e.is_stall()),
            _ => false,
        }
    }
}
