//! Jacobi-preconditioned conjugate gradient on a distributed matrix.

use std::time::{Duration, Instant};

use crate::error::{Result, SpmvError};
use crate::matrix::{DistMatrix, DistVector};
use crate::runtime::RankContext;
use crate::spmv::{ExecMode, Multiplier};

pub const DEFAULT_MAX_ITERS: usize = 10_000;
pub const DEFAULT_RTOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub rtol: f64,
    pub max_iters: usize,
    pub mode: ExecMode,
    pub workers: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            rtol: DEFAULT_RTOL,
            max_iters: DEFAULT_MAX_ITERS,
            mode: ExecMode::Flat,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Last entry of `residual_history`. A converged solve always reports the
    /// true residual here.
    pub final_relative_residual: f64,
    pub converged: bool,
    /// Time inside the multiply, summed over iterations.
    pub spmv_time: Duration,
    pub total_time: Duration,
    pub spmv_calls: usize,
    /// Relative residual before the first iteration and after each one.
    /// Whenever the updated residual met the tolerance, the entry is the
    /// true residual `||b - Ax|| / ||b||` used to confirm it.
    pub residual_history: Vec<f64>,
}

/// `1 / A[i, i]` for every owned row.
pub fn jacobi_inverse_diagonal(a: &DistMatrix) -> Result<Vec<f64>> {
    let first = a.row_range().start;
    (0..a.nlocal())
        .map(|i| match a.diag().get(i, i) {
            None => Err(SpmvError::MissingDiagonal { row: first + i }),
            Some(0.0) => Err(SpmvError::ZeroDiagonal { row: first + i }),
            Some(v) => Ok(1.0 / v),
        })
        .collect()
}

fn local_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

/// Collective CG solve from a zero initial guess, building its own
/// multiplier for `opts.mode` and `opts.workers`.
pub fn cg_solve(
    ctx: &RankContext<'_>,
    a: &DistMatrix,
    b: &DistVector,
    opts: &SolveOptions,
) -> Result<(DistVector, SolveReport)> {
    let mult = Multiplier::new(ctx, a, opts.mode, opts.workers)?;
    cg_solve_with(ctx, &mult, b, opts.rtol, opts.max_iters)
}

/// Collective CG solve reusing `mult`.
///
/// Each iteration performs one multiply and three global reductions
/// (`p.q`, `r.r`, `r.z`); the last iteration skips `r.z`. When the updated
/// residual reaches `rtol`, one extra multiply checks the true residual; if
/// that check fails, `r` is replaced by `b - Ax` and the search direction
/// restarts, so an unreachable `rtol` runs to `max_iters`. Local dot products
/// run serially in row order, so the residual history does not depend on the
/// execution mode or worker count.
pub fn cg_solve_with(
    ctx: &RankContext<'_>,
    mult: &Multiplier<'_>,
    b: &DistVector,
    rtol: f64,
    max_iters: usize,
) -> Result<(DistVector, SolveReport)> {
    let started = Instant::now();
    let a = mult.matrix();
    let n = a.nlocal();
    if b.local.len() != n {
        return Err(SpmvError::DimensionMismatch {
            what: "right-hand side",
            expected: n,
            actual: b.local.len(),
        });
    }
    let dinv = jacobi_inverse_diagonal(a)?;

    let mut x = DistVector::zeros(a);
    let mut r = b.local.clone();
    let mut z = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut p = DistVector::zeros(a);
    let calls_before = mult.calls();
    let mut spmv_time = Duration::ZERO;

    let bnorm = ctx.allreduce_sum(local_dot(&b.local, &b.local))?.sqrt();
    if !bnorm.is_finite() {
        return Err(SpmvError::Divergence { iteration: 0 });
    }
    if bnorm == 0.0 {
        return Ok((
            x,
            SolveReport {
                iterations: 0,
                final_relative_residual: 0.0,
                converged: true,
                spmv_time,
                total_time: started.elapsed(),
                spmv_calls: 0,
                residual_history: vec![0.0],
            },
        ));
    }

    mult.for_each_range(vec![&mut z, &mut p.local], |rows, parts| {
        for (k, i) in rows.enumerate() {
            let zi = dinv[i] * r[i];
            parts[0][k] = zi;
            parts[1][k] = zi;
        }
    });
    let mut rz = ctx.allreduce_sum(local_dot(&r, &z))?;
    let mut rel = ctx.allreduce_sum(local_dot(&r, &r))?.sqrt() / bnorm;
    let mut history = vec![rel];

    let mut iterations = 0;
    while rel > rtol && iterations < max_iters {
        iterations += 1;

        let t = Instant::now();
        mult.apply(ctx, &mut p, &mut q)?;
        spmv_time += t.elapsed();

        let pq = ctx.allreduce_sum(local_dot(&p.local, &q))?;
        let alpha = rz / pq;
        if !alpha.is_finite() {
            return Err(SpmvError::Divergence {
                iteration: iterations,
            });
        }
        {
            let (p_local, q) = (&p.local, &q);
            mult.for_each_range(vec![&mut x.local, &mut r], |rows, parts| {
                for (k, i) in rows.enumerate() {
                    parts[0][k] += alpha * p_local[i];
                    parts[1][k] -= alpha * q[i];
                }
            });
        }

        rel = ctx.allreduce_sum(local_dot(&r, &r))?.sqrt() / bnorm;
        if !rel.is_finite() {
            return Err(SpmvError::Divergence {
                iteration: iterations,
            });
        }
        history.push(rel);
        let mut restart = false;
        if rel <= rtol {
            // The recurrence can drift below what the iterate really
            // achieves; confirm against b - Ax and restart from it if needed.
            let t = Instant::now();
            mult.apply(ctx, &mut x, &mut q)?;
            spmv_time += t.elapsed();
            {
                let q = &q;
                let b = &b.local;
                mult.for_each_range(vec![&mut r], |rows, parts| {
                    for (k, i) in rows.enumerate() {
                        parts[0][k] = b[i] - q[i];
                    }
                });
            }
            rel = ctx.allreduce_sum(local_dot(&r, &r))?.sqrt() / bnorm;
            if !rel.is_finite() {
                return Err(SpmvError::Divergence {
                    iteration: iterations,
                });
            }
            *history.last_mut().expect("nonempty") = rel;
            if rel <= rtol {
                break;
            }
            restart = true;
        }

        mult.for_each_range(vec![&mut z], |rows, parts| {
            for (k, i) in rows.enumerate() {
                parts[0][k] = dinv[i] * r[i];
            }
        });
        let rz_next = ctx.allreduce_sum(local_dot(&r, &z))?;
        if restart {
            rz = rz_next;
            let z = &z;
            mult.for_each_range(vec![&mut p.local], |rows, parts| {
                for (k, i) in rows.enumerate() {
                    parts[0][k] = z[i];
                }
            });
            continue;
        }
        let beta = rz_next / rz;
        if !beta.is_finite() {
            return Err(SpmvError::Divergence {
                iteration: iterations,
            });
        }
        rz = rz_next;
        {
            let z = &z;
            mult.for_each_range(vec![&mut p.local], |rows, parts| {
                for (k, i) in rows.enumerate() {
                    parts[0][k] = z[i] + beta * parts[0][k];
                }
            });
        }
    }

    Ok((
        x,
        SolveReport {
            iterations,
            final_relative_residual: rel,
            converged: rel <= rtol,
            spmv_time,
            total_time: started.elapsed(),
            spmv_calls: mult.calls() - calls_before,
            residual_history: history,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{csr_from_coo, split_distributed, CsrMatrix, OwnershipMap};
    use crate::runtime::{spawn_ranks, RuntimeConfig};

    fn solve(
        a: &CsrMatrix,
        b: &[f64],
        ranks: usize,
        opts: SolveOptions,
    ) -> (Vec<f64>, Vec<SolveReport>) {
        let own = OwnershipMap::even(a.nrows(), ranks).unwrap();
        let out = spawn_ranks(ranks, RuntimeConfig::default(), |ctx| {
            let m = split_distributed(a, &own, ctx.rank())?;
            let bv = DistVector::from_global(&m, b)?;
            cg_solve(ctx, &m, &bv, &opts)
        })
        .unwrap();
        let x = out.iter().flat_map(|(x, _)| x.local.clone()).collect();
        (x, out.into_iter().map(|(_, r)| r).collect())
    }

    #[test]
    fn jacobi_of_constant_diagonal() {
        let a = csr_from_coo(&(0..4).map(|i| (i, i, 2.0)).collect::<Vec<_>>(), 4, 4).unwrap();
        let own = OwnershipMap::even(4, 1).unwrap();
        let m = split_distributed(&a, &own, 0).unwrap();
        assert_eq!(jacobi_inverse_diagonal(&m).unwrap(), vec![0.5; 4]);
    }

    #[test]
    fn jacobi_reports_global_row() {
        let a = csr_from_coo(&[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 0.0), (3, 3, 1.0)], 4, 4).unwrap();
        let own = OwnershipMap::even(4, 2).unwrap();
        let m = split_distributed(&a, &own, 1).unwrap();
        assert!(matches!(
            jacobi_inverse_diagonal(&m),
            Err(SpmvError::ZeroDiagonal { row: 2 })
        ));

        let a = csr_from_coo(&[(0, 0, 1.0), (1, 0, 1.0)], 2, 2).unwrap();
        let own = OwnershipMap::even(2, 1).unwrap();
        let m = split_distributed(&a, &own, 0).unwrap();
        assert!(matches!(
            jacobi_inverse_diagonal(&m),
            Err(SpmvError::MissingDiagonal { row: 1 })
        ));
    }

    #[test]
    fn scaled_identity_converges_in_one_step() {
        let a = csr_from_coo(&(0..16).map(|i| (i, i, 2.0)).collect::<Vec<_>>(), 16, 16).unwrap();
        let (x, reports) = solve(&a, &[2.0; 16], 2, SolveOptions::default());
        assert_eq!(x, vec![1.0; 16]);
        assert!(reports.iter().all(|r| r.iterations == 1 && r.converged));
    }

    #[test]
    fn two_by_two_exact_in_two_steps() {
        let a = csr_from_coo(&[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)], 2, 2).unwrap();
        let opts = SolveOptions {
            rtol: 1e-12,
            ..Default::default()
        };
        for ranks in [1, 2] {
            let (x, reports) = solve(&a, &[1.0, 2.0], ranks, opts);
            assert!(reports[0].iterations <= 2);
            assert!(reports[0].converged);
            assert!((x[0] - 1.0 / 11.0).abs() < 1e-12);
            assert!((x[1] - 7.0 / 11.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_rhs_is_immediate() {
        let a = CsrMatrix::identity(3);
        let (x, reports) = solve(&a, &[0.0; 3], 1, SolveOptions::default());
        assert_eq!(x, vec![0.0; 3]);
        assert_eq!(reports[0].iterations, 0);
        assert!(reports[0].converged);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let a = csr_from_coo(
            &[
                (0, 0, 4.0),
                (0, 1, 1.0),
                (1, 0, 1.0),
                (1, 1, 3.0),
                (2, 2, 1.0),
                (2, 1, 0.5),
                (1, 2, 0.5),
            ],
            3,
            3,
        )
        .unwrap();
        let opts = SolveOptions {
            rtol: 1e-14,
            max_iters: 1,
            ..Default::default()
        };
        let (_, reports) = solve(&a, &[1.0, 2.0, 3.0], 1, opts);
        assert_eq!(reports[0].iterations, 1);
        assert!(!reports[0].converged);
        assert_eq!(reports[0].spmv_calls, 1);
    }

    #[test]
    fn indefinite_breakdown_is_divergence() {
        // p.Ap = 0 on the first step.
        let a = csr_from_coo(&[(0, 0, 1.0), (1, 1, -1.0)], 2, 2).unwrap();
        let own = OwnershipMap::even(2, 1).unwrap();
        let err = spawn_ranks(1, RuntimeConfig::default(), |ctx| {
            let m = split_distributed(&a, &own, 0)?;
            let b = DistVector::from_global(&m, &[1.0, 1.0])?;
            cg_solve(ctx, &m, &b, &SolveOptions::default()).map(|_| ())
        })
        .unwrap_err();
        match err {
            SpmvError::RankFailures(list) => {
                assert!(matches!(list[0].1, SpmvError::Divergence { iteration: 1 }))
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
