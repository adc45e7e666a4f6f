//! Hybrid rank/thread sparse matrix-vector multiplication.
//!
//! Ranks are simulated as concurrent contexts in one process ([`runtime`]).
//! Each rank stores its owned rows as a diagonal block and an off-diagonal
//! block ([`matrix`]), fills a ghost buffer through a two-phase halo exchange
//! ([`scatter`]), and multiplies with a team of worker threads in one of four
//! execution modes ([`spmv`]). Compute rows can be split evenly or balanced by
//! stored entries ([`partition`]). A Jacobi-preconditioned CG solver
//! ([`krylov`]) and a benchmark grid ([`bench`]) sit on top.

pub mod bench;
pub mod cli;
pub mod error;
pub mod genio;
pub mod krylov;
pub mod matrix;
pub mod partition;
pub mod runtime;
pub mod scatter;
pub mod spmv;

pub use error::{Result, SpmvError};
pub use matrix::{
    csr_from_coo, row_nnz_profile, split_distributed, CsrMatrix, DistMatrix, DistVector,
    OwnershipMap,
};
pub use partition::ThreadPartition;
pub use runtime::{spawn_ranks, Progression, RankContext, RuntimeConfig};
pub use scatter::ScatterPlan;
pub use spmv::{ExecMode, Multiplier};
