//! Benchmark grid over execution mode, rank count, and workers per rank.
//!
//! Each cell distributes the matrix, builds the scatter plan and compute
//! partition once, runs warmup solves, then times `repetitions` CG solves of
//! `A x = A 1`. Times are the slowest rank per repetition, reported as the
//! median over repetitions.

use std::io::Write;
use std::path::PathBuf;

use serde::Serialize;

use crate::error::{Result, SpmvError};
use crate::genio::{self, SkewedSpec};
use crate::krylov::{self, DEFAULT_MAX_ITERS, DEFAULT_RTOL};
use crate::matrix::{split_distributed, CsrMatrix, DistVector, OwnershipMap};
use crate::runtime::{spawn_ranks, RuntimeConfig};
use crate::spmv::{ExecMode, Multiplier};

pub const CSV_HEADER: &str =
    "mode,ranks,workers,cores,spmv_time_s,solve_time_s,iterations,imbalance,efficiency";

#[derive(Debug, Clone, PartialEq)]
pub enum MatrixSource {
    File(PathBuf),
    Extruded { nx: usize, ny: usize, layers: usize },
    Skewed(SkewedSpec),
}

impl MatrixSource {
    pub fn load(&self) -> Result<CsrMatrix> {
        match self {
            MatrixSource::File(path) => genio::read_matrix_market(path)?.to_csr(),
            MatrixSource::Extruded { nx, ny, layers } => {
                if *nx == 0 || *ny == 0 || *layers == 0 {
                    return Err(SpmvError::Config("grid dimensions must be positive".into()));
                }
                genio::gen_extruded_laplacian(*nx, *ny, *layers).to_csr()
            }
            MatrixSource::Skewed(spec) => genio::gen_skewed(spec)?.to_csr(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub source: MatrixSource,
    pub modes: Vec<ExecMode>,
    pub ranks_list: Vec<usize>,
    pub workers_list: Vec<usize>,
    pub repetitions: usize,
    pub warmup: usize,
    pub rtol: f64,
    pub max_iters: usize,
    pub csv_path: Option<PathBuf>,
    pub runtime: RuntimeConfig,
}

impl BenchConfig {
    pub fn new(source: MatrixSource) -> Self {
        Self {
            source,
            modes: ExecMode::ALL.to_vec(),
            ranks_list: vec![1],
            workers_list: vec![2],
            repetitions: 3,
            warmup: 1,
            rtol: DEFAULT_RTOL,
            max_iters: DEFAULT_MAX_ITERS,
            csv_path: None,
            runtime: RuntimeConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(SpmvError::Config("repetitions must be at least 1".into()));
        }
        if self.rtol.is_nan() || self.rtol <= 0.0 {
            return Err(SpmvError::Config("rtol must be positive".into()));
        }
        if self.ranks_list.contains(&0) || self.workers_list.contains(&0) {
            return Err(SpmvError::Config(
                "rank and worker counts must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    #[serde(serialize_with = "serialize_mode")]
    pub mode: ExecMode,
    pub ranks: usize,
    pub workers: usize,
    pub cores: usize,
    pub spmv_time_s: f64,
    pub solve_time_s: f64,
    pub iterations: usize,
    pub imbalance: f64,
    pub efficiency: Option<f64>,
    #[serde(skip)]
    pub converged: bool,
    /// Largest `|x_i - 1|` of the final iterate.
    #[serde(skip)]
    pub max_solution_error: f64,
}

fn serialize_mode<S: serde::Serializer>(
    mode: &ExecMode,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(mode)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedCell {
    pub mode: ExecMode,
    pub ranks: usize,
    pub workers: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct BenchOutcome {
    pub records: Vec<BenchRecord>,
    pub skipped: Vec<SkippedCell>,
}

/// Loads the configured matrix and runs the grid.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchOutcome> {
    cfg.validate()?;
    if cfg.modes.is_empty() {
        return Ok(BenchOutcome::default());
    }
    let a = cfg.source.load()?;
    run_benchmark_on(&a, cfg)
}

/// Runs the grid on an already assembled matrix. Cells execute one at a time
/// in mode, rank, worker order. `Flat` ignores the worker list and runs once
/// per rank count with one worker.
pub fn run_benchmark_on(a: &CsrMatrix, cfg: &BenchConfig) -> Result<BenchOutcome> {
    cfg.validate()?;
    if a.nrows() != a.ncols() {
        return Err(SpmvError::Config(format!(
            "benchmark matrix must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let b = a.mul_vec(&vec![1.0; a.ncols()])?;
    let mut out = BenchOutcome::default();

    for &mode in &cfg.modes {
        for &ranks in &cfg.ranks_list {
            let workers_list: Vec<usize> = if mode == ExecMode::Flat {
                vec![1]
            } else {
                cfg.workers_list.clone()
            };
            for workers in workers_list {
                let skip = |reason: String| SkippedCell {
                    mode,
                    ranks,
                    workers,
                    reason,
                };
                if let Err(e) = mode.validate_workers(workers) {
                    out.skipped.push(skip(e.to_string()));
                    continue;
                }
                if ranks > a.nrows() {
                    out.skipped
                        .push(skip(format!("{ranks} ranks exceed {} rows", a.nrows())));
                    continue;
                }
                out.records
                    .push(run_cell(a, &b, cfg, mode, ranks, workers)?);
            }
        }
    }

    if let Some(base) = default_baseline(&out.records) {
        compute_efficiency(&mut out.records, base)?;
    }
    Ok(out)
}

struct RankRun {
    spmv: Vec<f64>,
    solve: Vec<f64>,
    iterations: usize,
    converged: bool,
    imbalance: f64,
    max_err: f64,
}

fn run_cell(
    a: &CsrMatrix,
    b: &[f64],
    cfg: &BenchConfig,
    mode: ExecMode,
    ranks: usize,
    workers: usize,
) -> Result<BenchRecord> {
    let own = OwnershipMap::even(a.nrows(), ranks)?;
    let runs = spawn_ranks(ranks, cfg.runtime, |ctx| {
        let m = split_distributed(a, &own, ctx.rank())?;
        let mult = Multiplier::new(ctx, &m, mode, workers)?;
        let bv = DistVector::from_global(&m, b)?;
        for _ in 0..cfg.warmup {
            krylov::cg_solve_with(ctx, &mult, &bv, cfg.rtol, cfg.max_iters)?;
        }
        let mut run = RankRun {
            spmv: Vec::with_capacity(cfg.repetitions),
            solve: Vec::with_capacity(cfg.repetitions),
            iterations: 0,
            converged: false,
            imbalance: mult.partition().imbalance(),
            max_err: 0.0,
        };
        for _ in 0..cfg.repetitions {
            ctx.barrier()?;
            let (x, report) = krylov::cg_solve_with(ctx, &mult, &bv, cfg.rtol, cfg.max_iters)?;
            run.spmv.push(report.spmv_time.as_secs_f64());
            run.solve.push(report.total_time.as_secs_f64());
            run.iterations = report.iterations;
            run.converged = report.converged;
            run.max_err = x.local.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        }
        Ok(run)
    })?;

    let slowest = |pick: fn(&RankRun) -> &Vec<f64>| -> Vec<f64> {
        (0..cfg.repetitions)
            .map(|k| runs.iter().map(|r| pick(r)[k]).fold(0.0, f64::max))
            .collect()
    };
    Ok(BenchRecord {
        mode,
        ranks,
        workers,
        cores: ranks * workers,
        spmv_time_s: median(slowest(|r| &r.spmv)),
        solve_time_s: median(slowest(|r| &r.solve)),
        iterations: runs[0].iterations,
        imbalance: runs.iter().map(|r| r.imbalance).fold(0.0, f64::max),
        efficiency: None,
        converged: runs[0].converged,
        max_solution_error: runs.iter().map(|r| r.max_err).fold(0.0, f64::max),
    })
}

pub fn median(mut v: Vec<f64>) -> f64 {
    assert!(!v.is_empty(), "median of nothing");
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// First record with the fewest cores.
pub fn default_baseline(records: &[BenchRecord]) -> Option<usize> {
    records
        .iter()
        .enumerate()
        .min_by_key(|(_, r)| r.cores)
        .map(|(i, _)| i)
}

/// Strong-scaling efficiency against `records[baseline]`:
/// `(T_base * cores_base) / (T * cores)` on the SpMV time.
pub fn compute_efficiency(records: &mut [BenchRecord], baseline: usize) -> Result<()> {
    let base = records
        .get(baseline)
        .ok_or_else(|| SpmvError::Config(format!("baseline record {baseline} does not exist")))?;
    let usable = |t: f64| t.is_finite() && t > 0.0;
    if !usable(base.spmv_time_s) {
        return Err(SpmvError::ZeroTime(baseline));
    }
    let work = base.spmv_time_s * base.cores as f64;
    if let Some(i) = records.iter().position(|r| !usable(r.spmv_time_s)) {
        return Err(SpmvError::ZeroTime(i));
    }
    for r in records.iter_mut() {
        r.efficiency = Some(work / (r.spmv_time_s * r.cores as f64));
    }
    Ok(())
}

pub fn write_csv<W: Write>(out: W, records: &[BenchRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(cores: usize, t: f64) -> BenchRecord {
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
    fn efficiency_ideal_flat_superlinear() {
        let mut r = vec![rec(2, 1.0), rec(4, 0.5), rec(4, 1.0), rec(4, 0.4)];
        compute_efficiency(&mut r, 0).unwrap();
        let e: Vec<f64> = r.iter().map(|r| r.efficiency.unwrap()).collect();
        assert_eq!(e[0], 1.0);
        assert_eq!(e[1], 1.0);
        assert_eq!(e[2], 0.5);
        assert!((e[3] - 1.25).abs() < 1e-15);
    }

    #[test]
    fn efficiency_errors() {
        let mut r = vec![rec(1, 0.0), rec(2, 1.0)];
        assert!(matches!(
            compute_efficiency(&mut r, 0),
            Err(SpmvError::ZeroTime(0))
        ));
        let mut r = vec![rec(1, 1.0), rec(2, 0.0)];
        assert!(matches!(
            compute_efficiency(&mut r, 0),
            Err(SpmvError::ZeroTime(1))
        ));
        assert!(compute_efficiency(&mut r, 5).is_err());
    }

    #[test]
    fn median_odd_even() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn csv_header_and_row() {
        let mut r = vec![rec(1, 0.5)];
        compute_efficiency(&mut r, 0).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &r).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.next(), Some("flat,1,1,1,0.5,0.5,1,1.0,1.0"));
    }

    #[test]
    fn empty_modes_is_empty() {
        let mut cfg = BenchConfig::new(MatrixSource::Extruded {
            nx: 2,
            ny: 2,
            layers: 2,
        });
        cfg.modes.clear();
        let out = run_benchmark(&cfg).unwrap();
        assert!(out.records.is_empty() && out.skipped.is_empty());
    }

    #[test]
    fn infeasible_cells_are_skipped() {
        let mut cfg = BenchConfig::new(MatrixSource::Extruded {
            nx: 2,
            ny: 2,
            layers: 2,
        });
        cfg.modes = vec![ExecMode::Task, ExecMode::Vector];
        cfg.workers_list = vec![1];
        cfg.ranks_list = vec![1, 16];
        cfg.repetitions = 1;
        cfg.warmup = 0;
        let out = run_benchmark(&cfg).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].mode, ExecMode::Vector);
        assert_eq!(out.skipped.len(), 3);
        assert!(out.skipped.iter().all(|s| !s.reason.is_empty()));
    }

    #[test]
    fn zero_repetitions_rejected() {
        let mut cfg = BenchConfig::new(MatrixSource::Extruded {
            nx: 2,
            ny: 2,
            layers: 2,
        });
        cfg.repetitions = 0;
        assert!(matches!(run_benchmark(&cfg), Err(SpmvError::Config(_))));
    }
}
