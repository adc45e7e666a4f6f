#![allow(dead_code)]

use hybrid_spmv::{
    csr_from_coo, spawn_ranks, split_distributed, CsrMatrix, DistVector, ExecMode, Multiplier,
    OwnershipMap, Result, RuntimeConfig, ScatterPlan,
};
use rand::seq::index::sample;
use rand::{Rng, RngCore};

/// Random `n x n` matrix with a nonzero diagonal and `density` chance per
/// off-diagonal slot (at least one entry per row is not guaranteed).
pub fn random_matrix<R: RngCore>(rng: &mut R, n: usize, density: f64) -> CsrMatrix {
    let mut t = Vec::new();
    for i in 0..n {
        t.push((i, i, rng.random_range(1.0..4.0)));
        for j in 0..n {
            if i != j && rng.random_bool(density) {
                t.push((i, j, rng.random_range(-2.0..2.0)));
            }
        }
    }
    csr_from_coo(&t, n, n).unwrap()
}

/// Random sparse matrix with `per_row` off-diagonal entries per row.
pub fn random_sparse<R: RngCore>(rng: &mut R, n: usize, per_row: usize) -> CsrMatrix {
    let mut t = Vec::new();
    for i in 0..n {
        t.push((i, i, rng.random_range(1.0..4.0)));
        let k = per_row.min(n.saturating_sub(1));
        for j in sample(rng, n, k).into_iter() {
            if j != i {
                t.push((i, j, rng.random_range(-2.0..2.0)));
            }
        }
    }
    csr_from_coo(&t, n, n).unwrap()
}

/// Block diagonal matrix whose blocks line up with `own`.
pub fn block_diagonal<R: RngCore>(rng: &mut R, own: &OwnershipMap) -> CsrMatrix {
    let n = own.global_len();
    let mut t = Vec::new();
    for r in 0..own.ranks() {
        let rows = own.range(r);
        for i in rows.clone() {
            for j in rows.clone() {
                if i == j || rng.random_bool(0.3) {
                    t.push((i, j, rng.random_range(1.0..2.0)));
                }
            }
        }
    }
    csr_from_coo(&t, n, n).unwrap()
}

/// Random contiguous ownership with every rank holding at least one row.
pub fn random_ownership<R: RngCore>(rng: &mut R, n: usize, ranks: usize) -> OwnershipMap {
    assert!(ranks >= 1 && ranks <= n);
    let mut cuts: Vec<usize> = sample(rng, n - 1, ranks - 1)
        .into_iter()
        .map(|c| c + 1)
        .collect();
    cuts.sort_unstable();
    let mut starts = vec![0];
    starts.extend(cuts);
    starts.push(n);
    OwnershipMap::from_row_starts(starts).unwrap()
}

pub fn random_vector<R: RngCore>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Distributed product assembled into a global vector.
pub fn distributed_spmv(
    a: &CsrMatrix,
    own: &OwnershipMap,
    x: &[f64],
    mode: ExecMode,
    workers: usize,
    config: RuntimeConfig,
) -> Result<Vec<f64>> {
    let parts = spawn_ranks(own.ranks(), config, |ctx| {
        let dm = split_distributed(a, own, ctx.rank())?;
        let mut xv = DistVector::from_global(&dm, x)?;
        hybrid_spmv::spmv::spmv(ctx, mode, &dm, &mut xv, workers)
    })?;
    Ok(parts.concat())
}

/// Products for every mode, sharing one set of rank threads and plans.
pub fn spmv_all_modes(
    a: &CsrMatrix,
    own: &OwnershipMap,
    x: &[f64],
    workers: usize,
) -> Result<Vec<Vec<f64>>> {
    let parts = spawn_ranks(own.ranks(), RuntimeConfig::default(), |ctx| {
        let dm = split_distributed(a, own, ctx.rank())?;
        let plan = ScatterPlan::for_matrix(ctx, &dm)?;
        let mut out = Vec::new();
        for mode in ExecMode::ALL {
            let m = Multiplier::with_plan(&dm, mode, workers, plan.clone())?;
            let mut xv = DistVector::from_global(&dm, x)?;
            let mut y = vec![f64::NAN; dm.nlocal()];
            m.apply(ctx, &mut xv, &mut y)?;
            out.push(y);
        }
        Ok(out)
    })?;
    Ok((0..ExecMode::ALL.len())
        .map(|k| parts.iter().flat_map(|p| p[k].iter().copied()).collect())
        .collect())
}

/// Largest `|y_i - oracle_i| / sum_j |a_ij x_j|` over rows with a nonzero
/// denominator; rows with a zero denominator must match exactly.
pub fn max_relative_error(a: &CsrMatrix, x: &[f64], y: &[f64], oracle: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        let (cols, vals) = a.row(i);
        let scale: f64 = cols.iter().zip(vals).map(|(&j, v)| (v * x[j]).abs()).sum();
        let diff = (y[i] - oracle[i]).abs();
        if scale == 0.0 {
            if diff != 0.0 {
                return f64::INFINITY;
            }
        } else {
            worst = worst.max(diff / scale);
        }
    }
    worst
}

pub fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}
