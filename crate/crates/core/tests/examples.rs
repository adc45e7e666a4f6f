//! Worked examples on the 4x4 fixture, end to end through the public API.

use hybrid_spmv::bench::{self, BenchConfig, BenchRecord, MatrixSource};
use hybrid_spmv::genio::{parse_matrix_market, write_matrix_market, CooMatrix};
use hybrid_spmv::krylov::{cg_solve, jacobi_inverse_diagonal, SolveOptions};
use hybrid_spmv::{
    csr_from_coo, spawn_ranks, split_distributed, CsrMatrix, DistVector, ExecMode, OwnershipMap,
    RuntimeConfig, ScatterPlan,
};

fn f1() -> CsrMatrix {
    let dense = [
        [2., 0., 0., 1.],
        [0., 2., 0., 0.],
        [0., 0., 2., 0.],
        [1., 0., 0., 2.],
    ];
    let t: Vec<_> = (0..4)
        .flat_map(|i| (0..4).map(move |j| (i, j, dense[i][j])))
        .filter(|&(_, _, v)| v != 0.0)
        .collect();
    csr_from_coo(&t, 4, 4).unwrap()
}

fn own2() -> OwnershipMap {
    OwnershipMap::from_row_starts(vec![0, 2, 4]).unwrap()
}

#[test]
fn f1_halo_and_product_every_mode() {
    let a = f1();
    let own = own2();
    let x = [1.0, 2.0, 3.0, 4.0];
    for mode in ExecMode::ALL {
        let out = spawn_ranks(2, RuntimeConfig::default(), |ctx| {
            let dm = split_distributed(&a, &own, ctx.rank())?;
            let plan = ScatterPlan::for_matrix(ctx, &dm)?;
            let mut xv = DistVector::from_global(&dm, &x)?;
            plan.scatter(ctx, &mut xv)?;
            let ghost = xv.ghost.clone();
            let y = hybrid_spmv::spmv::spmv(ctx, mode, &dm, &mut xv, 2)?;
            Ok((ghost, y))
        })
        .unwrap();
        assert_eq!(out[0].0, vec![4.0]);
        assert_eq!(out[1].0, vec![1.0]);
        let y: Vec<f64> = out.iter().flat_map(|(_, y)| y.clone()).collect();
        assert_eq!(y, vec![6.0, 4.0, 6.0, 9.0], "{mode}");
    }
}

#[test]
fn f1_jacobi_and_solve() {
    let a = f1();
    let own = own2();
    let b = a.mul_vec(&[1.0; 4]).unwrap();
    let out = spawn_ranks(2, RuntimeConfig::default(), |ctx| {
        let dm = split_distributed(&a, &own, ctx.rank())?;
        let dinv = jacobi_inverse_diagonal(&dm)?;
        let bv = DistVector::from_global(&dm, &b)?;
        let (x, report) = cg_solve(
            ctx,
            &dm,
            &bv,
            &SolveOptions {
                rtol: 1e-12,
                ..Default::default()
            },
        )?;
        Ok((dinv, x.local, report.converged))
    })
    .unwrap();
    for (dinv, x, converged) in out {
        assert_eq!(dinv, vec![0.5, 0.5]);
        assert!(converged);
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }
}

#[test]
fn f1_matrix_market_round_trip() {
    let a = f1();
    let mut text = Vec::new();
    write_matrix_market(&mut text, &CooMatrix::from(&a)).unwrap();
    assert_eq!(
        parse_matrix_market(text.as_slice())
            .unwrap()
            .to_csr()
            .unwrap(),
        a
    );
}

fn serial_cg_iterations(a: &CsrMatrix, b: &[f64], rtol: f64) -> usize {
    let n = a.nrows();
    let dinv: Vec<f64> = (0..n).map(|i| 1.0 / a.get(i, i).unwrap()).collect();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| p * q).sum::<f64>();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for k in 1..=10_000 {
        let q = a.mul_vec(&p).unwrap();
        let alpha = rz / dot(&p, &q);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        if dot(&r, &r).sqrt() / bnorm <= rtol {
            return k;
        }
        z = r.iter().zip(&dinv).map(|(r, d)| r * d).collect();
        let next = dot(&r, &z);
        for i in 0..n {
            p[i] = z[i] + next / rz * p[i];
        }
        rz = next;
    }
    10_000
}

#[test]
fn one_cell_grid_matches_serial_cg() {
    let source = MatrixSource::Extruded {
        nx: 5,
        ny: 5,
        layers: 4,
    };
    let a = source.load().unwrap();
    assert_eq!(a.nrows(), 100);
    let mut cfg = BenchConfig::new(source);
    cfg.modes = vec![ExecMode::Flat];
    cfg.workers_list = vec![1];
    cfg.repetitions = 1;
    let out = bench::run_benchmark(&cfg).unwrap();
    assert_eq!(out.records.len(), 1);
    let b = a.mul_vec(&vec![1.0; 100]).unwrap();
    assert_eq!(
        out.records[0].iterations,
        serial_cg_iterations(&a, &b, cfg.rtol)
    );
}

#[test]
fn four_mode_grid_has_identical_iterations() {
    let mut cfg = BenchConfig::new(MatrixSource::Extruded {
        nx: 6,
        ny: 6,
        layers: 6,
    });
    cfg.ranks_list = vec![2];
    cfg.workers_list = vec![4];
    cfg.repetitions = 1;
    let out = bench::run_benchmark(&cfg).unwrap();
    assert_eq!(out.records.len(), 4);
    assert!(out.skipped.is_empty());
    assert!(out
        .records
        .iter()
        .all(|r| r.iterations == out.records[0].iterations));
}

#[test]
fn infeasible_cells_are_skipped() {
    let mut cfg = BenchConfig::new(MatrixSource::Extruded {
        nx: 3,
        ny: 3,
        layers: 3,
    });
    cfg.workers_list = vec![1];
    cfg.repetitions = 1;
    let out = bench::run_benchmark(&cfg).unwrap();
    let modes: Vec<ExecMode> = out.records.iter().map(|r| r.mode).collect();
    assert_eq!(modes, vec![ExecMode::Flat, ExecMode::Vector]);
    assert_eq!(out.skipped.len(), 2);
    assert!(out.skipped.iter().all(|s| s.mode.is_task()));
}

#[test]
fn empty_mode_set_gives_no_records() {
    let mut cfg = BenchConfig::new(MatrixSource::Extruded {
        nx: 2,
        ny: 2,
        layers: 2,
    });
    cfg.modes.clear();
    assert!(bench::run_benchmark(&cfg).unwrap().records.is_empty());
}

fn record(cores: usize, t: f64) -> BenchRecord {
    BenchRecord {
        mode: ExecMode::Flat,
        ranks: cores,
        workers: 1,
        cores,
        spmv_time_s: t,
        solve_time_s: t,
        iterations: 1,
        imbalance: 1.0,
        efficiency: None,
        converged: true,
        max_solution_error: 0.0,
    }
}

#[test]
fn efficiency_examples() {
    let mut rs = vec![
        record(2, 1.0),
        record(4, 0.5),
        record(4, 1.0),
        record(4, 0.4),
    ];
    bench::compute_efficiency(&mut rs, 0).unwrap();
    let eff: Vec<f64> = rs.iter().map(|r| r.efficiency.unwrap()).collect();
    assert_eq!(eff[0], 1.0);
    assert_eq!(eff[1], 1.0);
    assert_eq!(eff[2], 0.5);
    assert!((eff[3] - 1.25).abs() < 1e-12);
    let mut zero = vec![record(1, 0.0), record(2, 1.0)];
    assert!(bench::compute_efficiency(&mut zero, 0).is_err());
}
