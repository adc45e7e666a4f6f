//! Contiguous per-worker row ranges, either split evenly by row count or
//! balanced by stored entries.
//!
//! The balanced scheme seeds each worker with a contiguous block by a greedy
//! sweep, then refines the boundaries by local diffusion: adjacent workers
//! trade single boundary rows whenever that strictly lowers the heavier side.

use std::ops::Range;

/// Default sweep cap for [`diffuse`].
pub const DEFAULT_MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PartitionScheme {
    EvenRows,
    BalancedNnz,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreadPartition {
    boundaries: Vec<usize>,
    nnz_per_worker: Vec<usize>,
}

impl ThreadPartition {
    /// Builds a partition from explicit boundaries.
    ///
    /// Panics if the boundaries do not start at 0, end at `row_nnz.len()`,
    /// and stay non-decreasing.
    pub fn from_boundaries(boundaries: Vec<usize>, row_nnz: &[usize]) -> Self {
        assert!(boundaries.len() >= 2, "need at least one worker");
        assert_eq!(boundaries[0], 0);
        assert_eq!(*boundaries.last().unwrap(), row_nnz.len());
        assert!(boundaries.windows(2).all(|w| w[0] <= w[1]));
        let nnz_per_worker = boundaries
            .windows(2)
            .map(|w| row_nnz[w[0]..w[1]].iter().sum())
            .collect();
        Self {
            boundaries,
            nnz_per_worker,
        }
    }

    pub fn workers(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn nnz_per_worker(&self) -> &[usize] {
        &self.nnz_per_worker
    }

    pub fn range(&self, worker: usize) -> Range<usize> {
        self.boundaries[worker]..self.boundaries[worker + 1]
    }

    pub fn max_load(&self) -> usize {
        self.nnz_per_worker.iter().copied().max().unwrap_or(0)
    }

    pub fn total_nnz(&self) -> usize {
        self.nnz_per_worker.iter().sum()
    }

    /// `max load * workers / total`; 1.0 is perfect balance (and the value
    /// for an empty matrix).
    pub fn imbalance(&self) -> f64 {
        let total = self.total_nnz();
        if total == 0 {
            return 1.0;
        }
        self.max_load() as f64 * self.workers() as f64 / total as f64
    }
}

/// Row ranges whose sizes differ by at most one; the first
/// `nlocal % workers` workers get the larger size.
pub fn partition_rows_even(nlocal: usize, workers: usize) -> ThreadPartition {
    assert!(workers >= 1, "need at least one worker");
    let (base, extra) = (nlocal / workers, nlocal % workers);
    let mut boundaries = Vec::with_capacity(workers + 1);
    boundaries.push(0);
    let mut acc = 0;
    for w in 0..workers {
        acc += base + usize::from(w < extra);
        boundaries.push(acc);
    }
    // Row counts stand in for nnz when only the shape is known.
    let ones = vec![1; nlocal];
    ThreadPartition::from_boundaries(boundaries, &ones)
}

/// Even row split with loads measured against real row weights.
pub fn partition_rows_even_weighted(row_nnz: &[usize], workers: usize) -> ThreadPartition {
    let even = partition_rows_even(row_nnz.len(), workers);
    ThreadPartition::from_boundaries(even.boundaries, row_nnz)
}

/// Greedy left-to-right allocation of contiguous row blocks.
///
/// Each worker's target is the remaining nnz divided by the remaining
/// workers. Its range closes at the cut whose cumulative load is nearest the
/// target, preferring the earlier cut on ties. While rows remain for every
/// worker, each range takes at least one row and leaves at least one for each
/// later worker.
pub fn partition_greedy(row_nnz: &[usize], workers: usize) -> ThreadPartition {
    assert!(workers >= 1, "need at least one worker");
    let n = row_nnz.len();
    let mut remaining: usize = row_nnz.iter().sum();
    let mut boundaries = Vec::with_capacity(workers + 1);
    boundaries.push(0);
    let mut start = 0;
    for w in 0..workers - 1 {
        let workers_left = workers - w;
        let target = remaining as f64 / workers_left as f64;
        let (min_end, max_end) = if n - start >= workers_left {
            (start + 1, n - (workers_left - 1))
        } else {
            (start, n)
        };

        let mut load = row_nnz[start..min_end].iter().sum::<usize>();
        let mut end = min_end;
        while end < max_end {
            let next = load + row_nnz[end];
            if next as f64 > target {
                // Crossing row: keep it only if strictly nearer the target.
                if (next as f64 - target) < (target - load as f64) {
                    load = next;
                    end += 1;
                }
                break;
            }
            load = next;
            end += 1;
        }
        boundaries.push(end);
        remaining -= load;
        start = end;
    }
    boundaries.push(n);
    ThreadPartition::from_boundaries(boundaries, row_nnz)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffuseOutcome {
    pub partition: ThreadPartition,
    /// Sweeps performed, including the final moveless one when converged.
    pub sweeps: usize,
    /// False when the sweep cap stopped the iteration.
    pub converged: bool,
}

/// Refines a partition by moving single boundary rows between adjacent
/// workers.
///
/// Pairs are visited left to right. A row moves from the heavier worker to
/// its lighter neighbour only if that strictly lowers the pair's maximum load
/// and leaves the donor non-empty; a pair keeps trading until no such move
/// exists. Stops after a sweep with no move or after `max_sweeps` sweeps.
pub fn diffuse(p: &ThreadPartition, row_nnz: &[usize], max_sweeps: usize) -> DiffuseOutcome {
    assert_eq!(*p.boundaries.last().unwrap(), row_nnz.len());
    let mut bounds = p.boundaries.clone();
    let mut loads: Vec<usize> = bounds
        .windows(2)
        .map(|w| row_nnz[w[0]..w[1]].iter().sum())
        .collect();
    let workers = loads.len();

    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut moved = false;
        for left in 0..workers.saturating_sub(1) {
            let right = left + 1;
            loop {
                let cut = bounds[right];
                let pair_max = loads[left].max(loads[right]);
                if loads[left] > loads[right] && cut - bounds[left] >= 2 {
                    let row = row_nnz[cut - 1];
                    if (loads[left] - row).max(loads[right] + row) < pair_max {
                        loads[left] -= row;
                        loads[right] += row;
                        bounds[right] -= 1;
                        moved = true;
                        continue;
                    }
                } else if loads[right] > loads[left] && bounds[right + 1] - cut >= 2 {
                    let row = row_nnz[cut];
                    if (loads[left] + row).max(loads[right] - row) < pair_max {
                        loads[left] += row;
                        loads[right] -= row;
                        bounds[right] += 1;
                        moved = true;
                        continue;
                    }
                }
                break;
            }
        }
        if !moved {
            converged = true;
            break;
        }
    }

    DiffuseOutcome {
        partition: ThreadPartition {
            boundaries: bounds,
            nnz_per_worker: loads,
        },
        sweeps,
        converged,
    }
}

/// Greedy seed refined by diffusion with the default sweep cap.
pub fn balanced(row_nnz: &[usize], workers: usize) -> ThreadPartition {
    diffuse(
        &partition_greedy(row_nnz, workers),
        row_nnz,
        DEFAULT_MAX_SWEEPS,
    )
    .partition
}

/// Imbalance of `p` measured against `row_nnz`.
pub fn imbalance(p: &ThreadPartition, row_nnz: &[usize]) -> f64 {
    ThreadPartition::from_boundaries(p.boundaries.clone(), row_nnz).imbalance()
}
