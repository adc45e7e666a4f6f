//! Distributed SpMV in four execution modes.
//!
//! Every mode computes each output row with the same arithmetic: the diagonal
//! block in ascending local column order, then the off-diagonal block added in
//! ascending ghost order. Each row is owned by exactly one worker, so results
//! are bitwise identical across modes and worker counts for a fixed ownership
//! map.
//!
//! * `Flat`: one worker per rank.
//! * `Vector`: worker 0 starts the exchange, all workers multiply the
//!   diagonal block over even row ranges, worker 0 completes the exchange,
//!   then all workers add the off-diagonal block.
//! * `Task`: worker 0 is a communication agent that drives the exchange to
//!   completion while workers `1..W` multiply the diagonal block, then
//!   signals them to add the off-diagonal block. The agent does no row work.
//! * `TaskBalanced`: as `Task`, with compute ranges balanced by stored
//!   entries and cached on the matrix.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Barrier, Mutex, RwLock};

use crate::error::{Result, SpmvError};
use crate::matrix::{CsrMatrix, DistMatrix, DistVector};
use crate::partition::{PartitionScheme, ThreadPartition};
use crate::runtime::RankContext;
use crate::scatter::ScatterPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExecMode {
    Flat,
    Vector,
    Task,
    TaskBalanced,
}

impl ExecMode {
    pub const ALL: [ExecMode; 4] = [
        ExecMode::Flat,
        ExecMode::Vector,
        ExecMode::Task,
        ExecMode::TaskBalanced,
    ];

    pub fn is_task(self) -> bool {
        matches!(self, ExecMode::Task | ExecMode::TaskBalanced)
    }

    /// Workers actually used per rank; `Flat` ignores the request.
    pub fn team_size(self, workers: usize) -> usize {
        match self {
            ExecMode::Flat => 1,
            _ => workers,
        }
    }

    pub fn validate_workers(self, workers: usize) -> Result<()> {
        let min = if self.is_task() { 2 } else { 1 };
        if self != ExecMode::Flat && workers < min {
            return Err(SpmvError::TooFewWorkers {
                mode: self,
                workers,
            });
        }
        Ok(())
    }

    /// Partition scheme and number of compute ranges for a team of `workers`.
    pub fn partition_key(self, workers: usize) -> (PartitionScheme, usize) {
        match self {
            ExecMode::Flat => (PartitionScheme::EvenRows, 1),
            ExecMode::Vector => (PartitionScheme::EvenRows, workers),
            ExecMode::Task => (PartitionScheme::EvenRows, workers - 1),
            ExecMode::TaskBalanced => (PartitionScheme::BalancedNnz, workers - 1),
        }
    }

    /// Compute range owned by team member `worker`, if any.
    fn compute_slot(self, worker: usize) -> Option<usize> {
        match self {
            ExecMode::Flat | ExecMode::Vector => Some(worker),
            ExecMode::Task | ExecMode::TaskBalanced => worker.checked_sub(1),
        }
    }
}

impl fmt::Display for ExecMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExecMode::Flat => "flat",
            ExecMode::Vector => "vector",
            ExecMode::Task => "task",
            ExecMode::TaskBalanced => "task-balanced",
        })
    }
}

impl FromStr for ExecMode {
    type Err = SpmvError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "flat" => Ok(ExecMode::Flat),
            "vector" => Ok(ExecMode::Vector),
            "task" => Ok(ExecMode::Task),
            "task-balanced" | "task_balanced" => Ok(ExecMode::TaskBalanced),
            other => Err(SpmvError::Config(format!("unknown mode `{other}`"))),
        }
    }
}

/// `y[k] = sum_j diag[r, j] * x_local[j]` for `r = rows.start + k`.
/// `y` covers exactly `rows`.
pub fn spmv_diag(diag: &CsrMatrix, x_local: &[f64], y: &mut [f64], rows: Range<usize>) {
    debug_assert_eq!(y.len(), rows.len());
    for (yk, r) in y.iter_mut().zip(rows) {
        let (cols, vals) = diag.row(r);
        let mut acc = 0.0;
        for (&c, &v) in cols.iter().zip(vals) {
            acc += v * x_local[c];
        }
        *yk = acc;
    }
}

/// `y[k] += sum_j offdiag[r, j] * ghost[j]` for `r = rows.start + k`.
pub fn spmv_offdiag_add(offdiag: &CsrMatrix, ghost: &[f64], y: &mut [f64], rows: Range<usize>) {
    debug_assert_eq!(y.len(), rows.len());
    for (yk, r) in y.iter_mut().zip(rows) {
        let (cols, vals) = offdiag.row(r);
        let mut acc = *yk;
        for (&c, &v) in cols.iter().zip(vals) {
            acc += v * ghost[c];
        }
        *yk = acc;
    }
}

/// A fixed set of worker threads for one rank. Every member runs each job
/// concurrently, so members may rendezvous on a barrier.
pub struct ThreadTeam {
    size: usize,
    pool: Option<rayon::ThreadPool>,
}

impl ThreadTeam {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(SpmvError::Config("a team needs at least one worker".into()));
        }
        let pool = if size == 1 {
            None
        } else {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(size)
                    .thread_name(|i| format!("spmv-worker-{i}"))
                    .build()
                    .map_err(|e| SpmvError::Config(format!("cannot start workers: {e}")))?,
            )
        };
        Ok(Self { size, pool })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Runs `job(worker)` once on every member and waits for all of them.
    pub fn run<F: Fn(usize) + Sync>(&self, job: F) {
        match &self.pool {
            None => job(0),
            Some(pool) => {
                pool.broadcast(|bc| job(bc.index()));
            }
        }
    }
}

pub(crate) fn split_by_bounds<'a>(mut v: &'a mut [f64], bounds: &[usize]) -> Vec<&'a mut [f64]> {
    bounds
        .windows(2)
        .map(|w| {
            let (head, tail) = std::mem::take(&mut v).split_at_mut(w[1] - w[0]);
            v = tail;
            head
        })
        .collect()
}

/// Per-rank multiply state: the scatter plan, the worker team, and the
/// cached compute partition for one matrix and mode. Build once, apply many
/// times.
pub struct Multiplier<'m> {
    matrix: &'m DistMatrix,
    mode: ExecMode,
    plan: ScatterPlan,
    team: ThreadTeam,
    partition: Arc<ThreadPartition>,
    calls: AtomicUsize,
}

impl<'m> Multiplier<'m> {
    /// Collective: builds the scatter plan with every other rank.
    pub fn new(
        ctx: &RankContext<'_>,
        matrix: &'m DistMatrix,
        mode: ExecMode,
        workers: usize,
    ) -> Result<Self> {
        mode.validate_workers(workers)?;
        let plan = ScatterPlan::for_matrix(ctx, matrix)?;
        Self::with_plan(matrix, mode, workers, plan)
    }

    /// Reuses an existing plan; no communication.
    pub fn with_plan(
        matrix: &'m DistMatrix,
        mode: ExecMode,
        workers: usize,
        plan: ScatterPlan,
    ) -> Result<Self> {
        mode.validate_workers(workers)?;
        if plan.nghost() != matrix.nghost() {
            return Err(SpmvError::DimensionMismatch {
                what: "scatter plan ghosts",
                expected: matrix.nghost(),
                actual: plan.nghost(),
            });
        }
        let team_size = mode.team_size(workers);
        let (scheme, ranges) = mode.partition_key(team_size);
        Ok(Self {
            matrix,
            mode,
            plan,
            team: ThreadTeam::new(team_size)?,
            partition: matrix.partition(scheme, ranges),
            calls: AtomicUsize::new(0),
        })
    }

    pub fn mode(&self) -> ExecMode {
        self.mode
    }

    pub fn matrix(&self) -> &DistMatrix {
        self.matrix
    }

    pub fn plan(&self) -> &ScatterPlan {
        &self.plan
    }

    pub fn team(&self) -> &ThreadTeam {
        &self.team
    }

    /// Row ranges of the compute workers.
    pub fn partition(&self) -> &ThreadPartition {
        &self.partition
    }

    /// Number of completed or attempted products.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    /// Collective: `y = A x` on the owned rows. Overwrites `x.ghost`.
    pub fn apply(&self, ctx: &RankContext<'_>, x: &mut DistVector, y: &mut [f64]) -> Result<()> {
        x.check_conforms(self.matrix)?;
        if y.len() != self.matrix.nlocal() {
            return Err(SpmvError::DimensionMismatch {
                what: "output vector",
                expected: self.matrix.nlocal(),
                actual: y.len(),
            });
        }
        self.calls.fetch_add(1, Ordering::Relaxed);
        let (diag, offdiag) = (self.matrix.diag(), self.matrix.offdiag());
        let n = self.matrix.nlocal();
        let DistVector { local, ghost } = x;

        if self.mode == ExecMode::Flat {
            let pending = self.plan.begin(ctx, local, ghost)?;
            spmv_diag(diag, local, y, 0..n);
            pending.end()?;
            spmv_offdiag_add(offdiag, ghost, y, 0..n);
            return Ok(());
        }

        let local: &[f64] = local;
        let ghost_buf = RwLock::new(std::mem::take(ghost));
        let chunks: Vec<Mutex<&mut [f64]>> = split_by_bounds(y, self.partition.boundaries())
            .into_iter()
            .map(Mutex::new)
            .collect();
        let rendezvous = Barrier::new(self.team.size());
        let failure: Mutex<Option<SpmvError>> = Mutex::new(None);
        let record = |e: SpmvError| {
            failure.lock().expect("failure slot").get_or_insert(e);
        };
        let failed = || failure.lock().expect("failure slot").is_some();
        let is_task = self.mode.is_task();

        self.team.run(|worker| {
            let slot = self.mode.compute_slot(worker);
            let mut out = slot.map(|s| chunks[s].lock().expect("row chunk"));

            if worker == 0 && is_task {
                // Communication agent: push the sends, then wait for the
                // ghosts while compute workers handle the diagonal block.
                let mut g = ghost_buf.write().expect("ghost lock");
                let done = self.plan.begin(ctx, local, &mut g).and_then(|p| {
                    p.progress()?;
                    p.end()
                });
                if let Err(e) = done {
                    record(e);
                }
                drop(g);
                rendezvous.wait();
                return;
            }

            let designated = worker == 0;
            let mut g = designated.then(|| ghost_buf.write().expect("ghost lock"));
            let pending = match g.as_deref_mut() {
                Some(buf) => match self.plan.begin(ctx, local, buf) {
                    Ok(p) => Some(p),
                    Err(e) => {
                        record(e);
                        None
                    }
                },
                None => None,
            };

            let rows = slot.map(|s| self.partition.range(s));
            if let (Some(out), Some(rows)) = (out.as_deref_mut(), rows.clone()) {
                spmv_diag(diag, local, out, rows);
            }

            if !is_task {
                rendezvous.wait();
                if let Some(p) = pending {
                    if let Err(e) = p.end() {
                        record(e);
                    }
                }
                drop(g);
            }
            rendezvous.wait();

            if failed() {
                return;
            }
            let g = ghost_buf.read().expect("ghost lock");
            if let (Some(out), Some(rows)) = (out.as_deref_mut(), rows) {
                spmv_offdiag_add(offdiag, &g, out, rows);
            }
        });

        *ghost = ghost_buf.into_inner().expect("ghost lock");
        match failure.into_inner().expect("failure slot") {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Runs `f(rows, parts)` on every compute worker, where `parts[i]` is the
    /// slice of `vecs[i]` covering `rows`. Ranges match the multiply's.
    pub fn for_each_range<F>(&self, vecs: Vec<&mut [f64]>, f: F)
    where
        F: Fn(Range<usize>, &mut [&mut [f64]]) + Sync,
    {
        let bounds = self.partition.boundaries();
        let nslots = self.partition.workers();
        let mut per_slot: Vec<Vec<&mut [f64]>> = (0..nslots)
            .map(|_| Vec::with_capacity(vecs.len()))
            .collect();
        for v in vecs {
            for (slot, piece) in split_by_bounds(v, bounds).into_iter().enumerate() {
                per_slot[slot].push(piece);
            }
        }
        let per_slot: Vec<Mutex<Vec<&mut [f64]>>> = per_slot.into_iter().map(Mutex::new).collect();
        self.team.run(|worker| {
            if let Some(slot) = self.mode.compute_slot(worker) {
                let mut parts = per_slot[slot].lock().expect("row chunk");
                f(self.partition.range(slot), &mut parts);
            }
        });
    }
}

/// One-shot collective product. Builds a fresh plan and team; use
/// [`Multiplier`] to repeat products.
pub fn spmv(
    ctx: &RankContext<'_>,
    mode: ExecMode,
    a: &DistMatrix,
    x: &mut DistVector,
    workers: usize,
) -> Result<Vec<f64>> {
    let m = Multiplier::new(ctx, a, mode, workers)?;
    let mut y = vec![0.0; a.nlocal()];
    m.apply(ctx, x, &mut y)?;
    Ok(y)
}
