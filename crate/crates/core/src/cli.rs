//! `spmv-bench` command line.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use crate::bench::{self, BenchConfig, MatrixSource};
use crate::error::{Result, SpmvError};
use crate::genio::{self, CooMatrix, SkewedSpec};
use crate::krylov::{self, SolveOptions, DEFAULT_MAX_ITERS, DEFAULT_RTOL};
use crate::matrix::{row_nnz_profile, split_distributed, DistVector, OwnershipMap};
use crate::partition::{self, DEFAULT_MAX_SWEEPS};
use crate::runtime::{spawn_ranks, Progression, RuntimeConfig};
use crate::spmv::ExecMode;

#[derive(Debug, Parser)]
#[command(
    name = "spmv-bench",
    version,
    about = "Hybrid rank/thread SpMV and CG benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the benchmark grid and emit CSV
    Run(RunArgs),
    /// Run a single CG solve
    Solve(SolveArgs),
    /// Print thread partition statistics
    Partition(PartitionArgs),
    /// Write a generated matrix in Matrix Market format
    Gen(GenArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Generator {
    Extruded,
    Skewed,
}

#[derive(Debug, Args)]
struct SourceArgs {
    /// Matrix Market file
    #[arg(long, value_name = "PATH", conflicts_with = "gen")]
    matrix: Option<PathBuf>,
    /// Generate the matrix instead of reading one
    #[arg(long, value_enum)]
    gen: Option<Generator>,
    #[arg(long, default_value_t = 16)]
    nx: usize,
    #[arg(long, default_value_t = 16)]
    ny: usize,
    #[arg(long, default_value_t = 8)]
    layers: usize,
    /// Rows of the skewed matrix
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0.1)]
    heavy_fraction: f64,
    #[arg(long, default_value_t = 50)]
    heavy_nnz: usize,
    #[arg(long, default_value_t = 5)]
    light_nnz: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SourceArgs {
    fn source(&self) -> Option<MatrixSource> {
        if let Some(p) = &self.matrix {
            return Some(MatrixSource::File(p.clone()));
        }
        self.gen.map(|g| match g {
            Generator::Extruded => MatrixSource::Extruded {
                nx: self.nx,
                ny: self.ny,
                layers: self.layers,
            },
            Generator::Skewed => MatrixSource::Skewed(SkewedSpec {
                n: self.n,
                heavy_fraction: self.heavy_fraction,
                heavy_nnz: self.heavy_nnz,
                light_nnz: self.light_nnz,
                seed: self.seed,
            }),
        })
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Comma-separated: flat,vector,task,task-balanced
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "flat,vector,task,task-balanced"
    )]
    modes: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    ranks: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "2")]
    workers: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    #[arg(long, default_value_t = DEFAULT_RTOL)]
    rtol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    max_iters: usize,
    /// Write CSV here instead of stdout
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
    /// Model sends that only progress when explicitly completed
    #[arg(long)]
    deferred: bool,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, default_value = "flat")]
    mode: String,
    #[arg(long, default_value_t = 1)]
    ranks: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = DEFAULT_RTOL)]
    rtol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    max_iters: usize,
}

#[derive(Debug, Args)]
struct PartitionArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, default_value_t = 2)]
    workers: usize,
    #[arg(long, default_value_t = 1)]
    ranks: usize,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Output file (stdout when omitted)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(SpmvError),
}

impl From<SpmvError> for Failure {
    fn from(e: SpmvError) -> Self {
        match e {
            SpmvError::Config(msg) => Failure::Usage(msg),
            other => Failure::Runtime(other),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns 0 on success, 2 on usage or configuration errors, 1 on runtime
/// failures.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let sub = match &cli.command {
        Command::Run(_) => "run",
        Command::Solve(_) => "solve",
        Command::Partition(_) => "partition",
        Command::Gen(_) => "gen",
    };
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Solve(a) => solve(a),
        Command::Partition(a) => show_partition(a),
        Command::Gen(a) => generate(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n");
            let mut cmd = Cli::command();
            cmd.build();
            if let Some(sc) = cmd.find_subcommand_mut(sub) {
                eprint!("{}", sc.render_help());
            }
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn require_source(s: &SourceArgs) -> std::result::Result<MatrixSource, Failure> {
    s.source().ok_or_else(|| {
        Failure::Usage("no matrix source; pass --matrix PATH or --gen extruded|skewed".into())
    })
}

fn parse_modes(names: &[String]) -> Result<Vec<ExecMode>> {
    names
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse())
        .collect()
}

fn run(a: RunArgs) -> std::result::Result<(), Failure> {
    let source = require_source(&a.source)?;
    let mut cfg = BenchConfig::new(source);
    cfg.modes = parse_modes(&a.modes)?;
    cfg.ranks_list = a.ranks;
    cfg.workers_list = a.workers;
    cfg.repetitions = a.reps;
    cfg.warmup = a.warmup;
    cfg.rtol = a.rtol;
    cfg.max_iters = a.max_iters;
    cfg.csv_path = a.csv;
    if a.deferred {
        cfg.runtime = cfg.runtime.with_progression(Progression::Deferred);
    }
    cfg.validate()?;

    let outcome = bench::run_benchmark(&cfg)?;
    for s in &outcome.skipped {
        eprintln!(
            "skipped {} ranks={} workers={}: {}",
            s.mode, s.ranks, s.workers, s.reason
        );
    }
    for r in outcome.records.iter().filter(|r| !r.converged) {
        eprintln!(
            "note: {} ranks={} workers={} hit the {}-iteration cap",
            r.mode, r.ranks, r.workers, cfg.max_iters
        );
    }
    match &cfg.csv_path {
        Some(p) => bench::write_csv(File::create(p)?, &outcome.records)?,
        None => bench::write_csv(io::stdout().lock(), &outcome.records)?,
    }
    Ok(())
}

fn solve(a: SolveArgs) -> std::result::Result<(), Failure> {
    let source = require_source(&a.source)?;
    let mode: ExecMode = a.mode.parse()?;
    mode.validate_workers(a.workers)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let m = source.load()?;
    let own = OwnershipMap::even(m.nrows(), a.ranks).map_err(|e| Failure::Usage(e.to_string()))?;
    let b = m.mul_vec(&vec![1.0; m.ncols()])?;
    let opts = SolveOptions {
        rtol: a.rtol,
        max_iters: a.max_iters,
        mode,
        workers: a.workers,
    };
    let reports = spawn_ranks(a.ranks, RuntimeConfig::default(), |ctx| {
        let dm = split_distributed(&m, &own, ctx.rank())?;
        let bv = DistVector::from_global(&dm, &b)?;
        let (x, report) = krylov::cg_solve(ctx, &dm, &bv, &opts)?;
        let err = x.local.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        Ok((report, err))
    })?;
    let (report, _) = &reports[0];
    let err = reports.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let spmv = reports
        .iter()
        .map(|(r, _)| r.spmv_time.as_secs_f64())
        .fold(0.0, f64::max);
    let total = reports
        .iter()
        .map(|(r, _)| r.total_time.as_secs_f64())
        .fold(0.0, f64::max);
    let mut out = io::stdout().lock();
    writeln!(out, "rows {} nnz {}", m.nrows(), m.nnz())?;
    writeln!(
        out,
        "mode {mode} ranks {} workers {}",
        a.ranks,
        mode.team_size(a.workers)
    )?;
    writeln!(out, "iterations {}", report.iterations)?;
    writeln!(
        out,
        "relative_residual {:e}",
        report.final_relative_residual
    )?;
    writeln!(out, "converged {}", report.converged)?;
    writeln!(out, "max_error_vs_ones {err:e}")?;
    writeln!(out, "spmv_time_s {spmv}")?;
    writeln!(out, "solve_time_s {total}")?;
    Ok(())
}

fn show_partition(a: PartitionArgs) -> std::result::Result<(), Failure> {
    let source = require_source(&a.source)?;
    if a.workers == 0 {
        return Err(Failure::Usage("--workers must be at least 1".into()));
    }
    let m = source.load()?;
    let own = OwnershipMap::even(m.nrows(), a.ranks).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut out = io::stdout().lock();
    for rank in 0..a.ranks {
        let dm = split_distributed(&m, &own, rank)?;
        let profile = row_nnz_profile(&dm);
        let even = partition::partition_rows_even_weighted(&profile, a.workers);
        let greedy = partition::partition_greedy(&profile, a.workers);
        let diffused = partition::diffuse(&greedy, &profile, DEFAULT_MAX_SWEEPS);
        writeln!(
            out,
            "rank {rank} rows {}..{} nnz {} workers {}",
            dm.row_range().start,
            dm.row_range().end,
            dm.nnz(),
            a.workers
        )?;
        for (name, p) in [
            ("even", &even),
            ("greedy", &greedy),
            ("balanced", &diffused.partition),
        ] {
            writeln!(
                out,
                "  {name:<8} boundaries {:?} nnz {:?} imbalance {}",
                p.boundaries(),
                p.nnz_per_worker(),
                p.imbalance()
            )?;
        }
        writeln!(
            out,
            "  diffusion sweeps {} converged {}",
            diffused.sweeps, diffused.converged
        )?;
    }
    Ok(())
}

fn generate(a: GenArgs) -> std::result::Result<(), Failure> {
    if a.source.matrix.is_some() {
        return Err(Failure::Usage("gen needs --gen, not --matrix".into()));
    }
    let source = require_source(&a.source)?;
    let coo: CooMatrix = (&source.load()?).into();
    match &a.out {
        Some(p) => genio::write_matrix_market_file(p, &coo)?,
        None => genio::write_matrix_market(io::stdout().lock(), &coo)?,
    }
    Ok(())
}
