//! Serial CSR storage, contiguous row ownership, and the per-rank
//! diagonal/off-diagonal matrix and vector types.
//!
//! A rank's owned row block is stored as two sequential CSR matrices. The
//! diagonal block holds every entry whose column also falls in the owned range
//! (columns renumbered to local indices); the off-diagonal block holds the rest,
//! with columns renumbered to positions in `garray`, the sorted list of remote
//! global columns this rank reads.

use std::collections::{BTreeSet, HashMap};
use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Result, SpmvError};
use crate::partition::{self, PartitionScheme, ThreadPartition};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from raw arrays, checking every CSR invariant.
    pub fn try_new(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != nrows + 1 {
            return Err(SpmvError::DimensionMismatch {
                what: "row_ptr",
                expected: nrows + 1,
                actual: row_ptr.len(),
            });
        }
        if col_idx.len() != values.len() {
            return Err(SpmvError::DimensionMismatch {
                what: "values",
                expected: col_idx.len(),
                actual: values.len(),
            });
        }
        if row_ptr[0] != 0 || row_ptr[nrows] != col_idx.len() {
            return Err(SpmvError::Config(
                "row_ptr must start at 0 and end at nnz".into(),
            ));
        }
        for i in 0..nrows {
            let (lo, hi) = (row_ptr[i], row_ptr[i + 1]);
            if lo > hi {
                return Err(SpmvError::Config(format!("row_ptr decreases at row {i}")));
            }
            let cols = &col_idx[lo..hi];
            if cols.iter().any(|&c| c >= ncols) {
                return Err(SpmvError::Config(format!("column out of range in row {i}")));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(SpmvError::Config(format!(
                    "columns of row {i} are not strictly increasing"
                )));
            }
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row_nnz(&self, row: usize) -> usize {
        self.row_ptr[row + 1] - self.row_ptr[row]
    }

    /// Column indices and values of one row.
    pub fn row(&self, row: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[row]..self.row_ptr[row + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    /// Serial product `A * x`, accumulating each row in ascending column order.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols {
            return Err(SpmvError::DimensionMismatch {
                what: "input vector",
                expected: self.ncols,
                actual: x.len(),
            });
        }
        Ok((0..self.nrows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter()
                    .zip(vals)
                    .fold(0.0, |acc, (&c, &v)| acc + v * x[c])
            })
            .collect())
    }

    /// Entries as `(row, col, value)` triplets in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.nrows)
            .flat_map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(move |(&c, &v)| (i, c, v))
            })
            .collect()
    }

    /// Value stored at `(row, col)`, if the entry is structurally present.
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let (cols, vals) = self.row(row);
        cols.binary_search(&col).ok().map(|k| vals[k])
    }
}

/// Assembles CSR from triplets. Duplicates are summed in input order and
/// explicit zeros are kept as stored entries.
pub fn csr_from_coo(
    triplets: &[(usize, usize, f64)],
    nrows: usize,
    ncols: usize,
) -> Result<CsrMatrix> {
    if let Some((index, &(row, col, _))) = triplets
        .iter()
        .enumerate()
        .find(|(_, &(r, c, _))| r >= nrows || c >= ncols)
    {
        return Err(SpmvError::TripletOutOfRange {
            index,
            row,
            col,
            nrows,
            ncols,
        });
    }

    let mut order: Vec<usize> = (0..triplets.len()).collect();
    order.sort_by_key(|&k| (triplets[k].0, triplets[k].1));

    let mut row_ptr = vec![0usize; nrows + 1];
    let mut col_idx = Vec::with_capacity(triplets.len());
    let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
    let mut last: Option<(usize, usize)> = None;
    for k in order {
        let (r, c, v) = triplets[k];
        if last == Some((r, c)) {
            *values.last_mut().expect("duplicate follows an entry") += v;
        } else {
            col_idx.push(c);
            values.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
    }
    for i in 0..nrows {
        row_ptr[i + 1] += row_ptr[i];
    }
    Ok(CsrMatrix {
        nrows,
        ncols,
        row_ptr,
        col_idx,
        values,
    })
}

/// Contiguous row ownership: rank `r` owns `row_start[r]..row_start[r + 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OwnershipMap {
    row_start: Vec<usize>,
}

impl OwnershipMap {
    /// Validates a strictly increasing offsets array starting at zero.
    pub fn from_row_starts(row_start: Vec<usize>) -> Result<Self> {
        if row_start.len() < 2 {
            return Err(SpmvError::InvalidOwnership("need at least one rank".into()));
        }
        if row_start[0] != 0 {
            return Err(SpmvError::InvalidOwnership(
                "first rank must start at row 0".into(),
            ));
        }
        if let Some(r) = row_start.windows(2).position(|w| w[0] >= w[1]) {
            return Err(SpmvError::InvalidOwnership(format!(
                "rank {r} owns no rows"
            )));
        }
        Ok(Self { row_start })
    }

    /// Splits `n` rows over `ranks` as evenly as possible; leading ranks take
    /// the remainder.
    pub fn even(n: usize, ranks: usize) -> Result<Self> {
        if ranks == 0 || ranks > n {
            return Err(SpmvError::InvalidOwnership(format!(
                "cannot split {n} rows over {ranks} rank(s) without empty ranks"
            )));
        }
        let (base, extra) = (n / ranks, n % ranks);
        let mut row_start = Vec::with_capacity(ranks + 1);
        let mut acc = 0;
        row_start.push(0);
        for r in 0..ranks {
            acc += base + usize::from(r < extra);
            row_start.push(acc);
        }
        Self::from_row_starts(row_start)
    }

    pub fn ranks(&self) -> usize {
        self.row_start.len() - 1
    }

    pub fn global_len(&self) -> usize {
        *self.row_start.last().expect("non-empty")
    }

    pub fn row_starts(&self) -> &[usize] {
        &self.row_start
    }

    pub fn range(&self, rank: usize) -> Range<usize> {
        self.row_start[rank]..self.row_start[rank + 1]
    }

    pub fn local_len(&self, rank: usize) -> usize {
        self.row_start[rank + 1] - self.row_start[rank]
    }

    /// Owning rank of a global row, or `None` past the end.
    pub fn owner(&self, row: usize) -> Option<usize> {
        if row >= self.global_len() {
            return None;
        }
        Some(self.row_start.partition_point(|&s| s <= row) - 1)
    }

    pub(crate) fn check_rank(&self, rank: usize) -> Result<()> {
        if rank >= self.ranks() {
            return Err(SpmvError::RankOutOfRange {
                rank,
                ranks: self.ranks(),
            });
        }
        Ok(())
    }
}

/// One rank's share of a distributed matrix.
#[derive(Debug)]
pub struct DistMatrix {
    ownership: OwnershipMap,
    rank: usize,
    diag: CsrMatrix,
    offdiag: CsrMatrix,
    garray: Vec<usize>,
    partitions: Mutex<HashMap<(PartitionScheme, usize), Arc<ThreadPartition>>>,
    partition_builds: AtomicUsize,
}

impl DistMatrix {
    /// Assembles a rank's matrix from pre-split parts, checking the layout
    /// invariants.
    pub fn from_parts(
        ownership: OwnershipMap,
        rank: usize,
        diag: CsrMatrix,
        offdiag: CsrMatrix,
        garray: Vec<usize>,
    ) -> Result<Self> {
        ownership.check_rank(rank)?;
        let nlocal = ownership.local_len(rank);
        for (what, actual) in [
            ("diag rows", diag.nrows()),
            ("diag cols", diag.ncols()),
            ("offdiag rows", offdiag.nrows()),
        ] {
            if actual != nlocal {
                return Err(SpmvError::DimensionMismatch {
                    what,
                    expected: nlocal,
                    actual,
                });
            }
        }
        if offdiag.ncols() != garray.len() {
            return Err(SpmvError::DimensionMismatch {
                what: "offdiag cols",
                expected: garray.len(),
                actual: offdiag.ncols(),
            });
        }
        if garray.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SpmvError::Config(
                "garray must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            ownership,
            rank,
            diag,
            offdiag,
            garray,
            partitions: Mutex::new(HashMap::new()),
            partition_builds: AtomicUsize::new(0),
        })
    }

    pub fn ownership(&self) -> &OwnershipMap {
        &self.ownership
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn nlocal(&self) -> usize {
        self.diag.nrows()
    }

    pub fn nghost(&self) -> usize {
        self.garray.len()
    }

    pub fn row_range(&self) -> Range<usize> {
        self.ownership.range(self.rank)
    }

    pub fn diag(&self) -> &CsrMatrix {
        &self.diag
    }

    pub fn offdiag(&self) -> &CsrMatrix {
        &self.offdiag
    }

    pub fn garray(&self) -> &[usize] {
        &self.garray
    }

    pub fn nnz(&self) -> usize {
        self.diag.nnz() + self.offdiag.nnz()
    }

    /// Cached thread partition for `workers` compute workers. The first
    /// request for a given key builds and publishes it; later ones reuse it.
    pub fn partition(&self, scheme: PartitionScheme, workers: usize) -> Arc<ThreadPartition> {
        let mut cache = self.partitions.lock().expect("partition cache poisoned");
        cache
            .entry((scheme, workers))
            .or_insert_with(|| {
                self.partition_builds.fetch_add(1, Ordering::Relaxed);
                Arc::new(match scheme {
                    PartitionScheme::EvenRows => {
                        partition::partition_rows_even_weighted(&row_nnz_profile(self), workers)
                    }
                    PartitionScheme::BalancedNnz => {
                        partition::balanced(&row_nnz_profile(self), workers)
                    }
                })
            })
            .clone()
    }

    /// Number of partitions this matrix has constructed so far.
    pub fn partition_builds(&self) -> usize {
        self.partition_builds.load(Ordering::Relaxed)
    }
}

/// Splits the rank's owned row block of `global` into diagonal and
/// off-diagonal parts.
pub fn split_distributed(
    global: &CsrMatrix,
    ownership: &OwnershipMap,
    rank: usize,
) -> Result<DistMatrix> {
    ownership.check_rank(rank)?;
    if global.nrows() != ownership.global_len() || global.ncols() != ownership.global_len() {
        return Err(SpmvError::DimensionMismatch {
            what: "global matrix vs ownership",
            expected: ownership.global_len(),
            actual: global.nrows().max(global.ncols()),
        });
    }
    let owned = ownership.range(rank);
    let nlocal = owned.len();

    let garray: Vec<usize> = owned
        .clone()
        .flat_map(|i| global.row(i).0.iter().copied())
        .filter(|c| !owned.contains(c))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut d_ptr = Vec::with_capacity(nlocal + 1);
    let mut o_ptr = Vec::with_capacity(nlocal + 1);
    let (mut d_cols, mut d_vals) = (Vec::new(), Vec::new());
    let (mut o_cols, mut o_vals) = (Vec::new(), Vec::new());
    d_ptr.push(0);
    o_ptr.push(0);
    for i in owned.clone() {
        let (cols, vals) = global.row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            if owned.contains(&c) {
                d_cols.push(c - owned.start);
                d_vals.push(v);
            } else {
                let slot = garray
                    .binary_search(&c)
                    .expect("ghost column collected above");
                o_cols.push(slot);
                o_vals.push(v);
            }
        }
        d_ptr.push(d_cols.len());
        o_ptr.push(o_cols.len());
    }

    let diag = CsrMatrix {
        nrows: nlocal,
        ncols: nlocal,
        row_ptr: d_ptr,
        col_idx: d_cols,
        values: d_vals,
    };
    let offdiag = CsrMatrix {
        nrows: nlocal,
        ncols: garray.len(),
        row_ptr: o_ptr,
        col_idx: o_cols,
        values: o_vals,
    };
    DistMatrix::from_parts(ownership.clone(), rank, diag, offdiag, garray)
}

/// Stored entries per owned row, diagonal and off-diagonal parts combined.
pub fn row_nnz_profile(m: &DistMatrix) -> Vec<usize> {
    (0..m.nlocal())
        .map(|i| m.diag.row_nnz(i) + m.offdiag.row_nnz(i))
        .collect()
}

/// A rank's owned vector entries plus the ghost buffer for remote entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DistVector {
    pub local: Vec<f64>,
    pub ghost: Vec<f64>,
}

impl DistVector {
    /// Zero vector conforming to `m`.
    pub fn zeros(m: &DistMatrix) -> Self {
        Self {
            local: vec![0.0; m.nlocal()],
            ghost: vec![0.0; m.nghost()],
        }
    }

    /// Owned entries of a global vector, with a zeroed ghost buffer sized for `m`.
    pub fn from_global(m: &DistMatrix, global: &[f64]) -> Result<Self> {
        if global.len() != m.ownership().global_len() {
            return Err(SpmvError::DimensionMismatch {
                what: "global vector",
                expected: m.ownership().global_len(),
                actual: global.len(),
            });
        }
        Ok(Self {
            local: global[m.row_range()].to_vec(),
            ghost: vec![0.0; m.nghost()],
        })
    }

    pub fn from_local(m: &DistMatrix, local: Vec<f64>) -> Result<Self> {
        if local.len() != m.nlocal() {
            return Err(SpmvError::DimensionMismatch {
                what: "local vector",
                expected: m.nlocal(),
                actual: local.len(),
            });
        }
        Ok(Self {
            local,
            ghost: vec![0.0; m.nghost()],
        })
    }

    pub(crate) fn check_conforms(&self, m: &DistMatrix) -> Result<()> {
        if self.local.len() != m.nlocal() {
            return Err(SpmvError::DimensionMismatch {
                what: "vector local part",
                expected: m.nlocal(),
                actual: self.local.len(),
            });
        }
        if self.ghost.len() != m.nghost() {
            return Err(SpmvError::DimensionMismatch {
                what: "vector ghost part",
                expected: m.nghost(),
                actual: self.ghost.len(),
            });
        }
        Ok(())
    }
}
