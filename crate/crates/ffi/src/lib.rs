//! C interface to `hybrid-spmv`.
//!
//! Matrices cross the boundary as opaque [`HsMatrix`] handles. Every fallible
//! call returns an [`HsStatus`]; on failure [`hs_last_error_message`] gives a
//! description valid until the next failing call on the same thread.
//! Distributed calls spin up their simulated ranks internally and assemble
//! the result into caller-owned buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hybrid_spmv::genio::{self, CooMatrix, SkewedSpec};
use hybrid_spmv::krylov::{self, SolveOptions};
use hybrid_spmv::partition;
use hybrid_spmv::{
    csr_from_coo, spawn_ranks, split_distributed, CsrMatrix, DistVector, ExecMode, OwnershipMap,
    RuntimeConfig, SpmvError,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    IoError = 4,
    Stalled = 5,
    Diverged = 6,
    RuntimeError = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsMode {
    Flat = 0,
    Vector = 1,
    Task = 2,
    TaskBalanced = 3,
}

impl From<HsMode> for ExecMode {
    fn from(m: HsMode) -> Self {
        match m {
            HsMode::Flat => ExecMode::Flat,
            HsMode::Vector => ExecMode::Vector,
            HsMode::Task => ExecMode::Task,
            HsMode::TaskBalanced => ExecMode::TaskBalanced,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsPartitionScheme {
    /// Row counts differ by at most one.
    EvenRows = 0,
    /// Greedy split refined by diffusion.
    BalancedNnz = 1,
}

/// Outcome of [`hs_cg_solve`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HsSolveReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
    /// Slowest rank's time inside the multiply.
    pub spmv_seconds: f64,
    /// Slowest rank's total solve time.
    pub total_seconds: f64,
}

/// Opaque square or rectangular CSR matrix.
pub struct HsMatrix {
    inner: CsrMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn classify(e: &SpmvError) -> HsStatus {
    if e.is_stall() {
        return HsStatus::Stalled;
    }
    match e {
        SpmvError::RankFailures(list) => list
            .first()
            .map_or(HsStatus::RuntimeError, |(_, e)| classify(e)),
        SpmvError::Parse { .. } => HsStatus::ParseError,
        SpmvError::Io(_) | SpmvError::Csv(_) => HsStatus::IoError,
        SpmvError::Divergence { .. } => HsStatus::Diverged,
        SpmvError::TripletOutOfRange { .. }
        | SpmvError::InvalidOwnership(_)
        | SpmvError::RankOutOfRange { .. }
        | SpmvError::DimensionMismatch { .. }
        | SpmvError::TooFewWorkers { .. }
        | SpmvError::MissingDiagonal { .. }
        | SpmvError::ZeroDiagonal { .. }
        | SpmvError::Infeasible(_)
        | SpmvError::Config(_) => HsStatus::InvalidArgument,
        _ => HsStatus::RuntimeError,
    }
}

enum Fail {
    Status(HsStatus, String),
    Core(SpmvError),
}

impl From<SpmvError> for Fail {
    fn from(e: SpmvError) -> Self {
        Fail::Core(e)
    }
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail::Status(HsStatus::InvalidArgument, msg.into())
}

fn null(what: &str) -> Fail {
    Fail::Status(HsStatus::NullPointer, format!("{what} is null"))
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> HsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HsStatus::Ok,
        Ok(Err(Fail::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Fail::Core(e))) => {
            let s = classify(&e);
            set_error(e.to_string());
            s
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            HsStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn matrix<'a>(m: *const HsMatrix) -> Result<&'a CsrMatrix, Fail> {
    m.as_ref().map(|h| &h.inner).ok_or_else(|| null("matrix"))
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid("path is not valid UTF-8"))
}

unsafe fn emit(out: *mut *mut HsMatrix, m: CsrMatrix) -> Result<(), Fail> {
    *out = Box::into_raw(Box::new(HsMatrix { inner: m }));
    Ok(())
}

fn ownership(a: &CsrMatrix, ranks: usize) -> Result<OwnershipMap, Fail> {
    if a.nrows() != a.ncols() {
        return Err(invalid("distributed operations need a square matrix"));
    }
    OwnershipMap::even(a.nrows(), ranks).map_err(Fail::from)
}

/// Description of the most recent failure on this thread, or null.
#[no_mangle]
pub extern "C" fn hs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Assembles a matrix from `nnz` zero-based triplets; duplicates are summed.
///
/// # Safety
/// `rows`, `cols` and `vals` must each point to `nnz` readable elements and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_matrix_from_coo(
    nrows: usize,
    ncols: usize,
    nnz: usize,
    rows: *const usize,
    cols: *const usize,
    vals: *const f64,
    out: *mut *mut HsMatrix,
) -> HsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (r, c, v) = (
            slice(rows, nnz, "rows")?,
            slice(cols, nnz, "cols")?,
            slice(vals, nnz, "vals")?,
        );
        let t: Vec<(usize, usize, f64)> = (0..nnz).map(|k| (r[k], c[k], v[k])).collect();
        emit(out, csr_from_coo(&t, nrows, ncols)?)
    })
}

/// Reads a coordinate Matrix Market file.
///
/// # Safety
/// `file` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_matrix_read_mm(
    file: *const c_char,
    out: *mut *mut HsMatrix,
) -> HsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        emit(out, genio::read_matrix_market(path(file)?)?.to_csr()?)
    })
}

/// Writes the matrix as a general coordinate Matrix Market file.
///
/// # Safety
/// `m` must come from this library and `file` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn hs_matrix_write_mm(m: *const HsMatrix, file: *const c_char) -> HsStatus {
    guard(|| {
        let a = matrix(m)?;
        genio::write_matrix_market_file(path(file)?, &CooMatrix::from(a))?;
        Ok(())
    })
}

/// Shifted 7-point Laplacian on an `nx x ny` grid extruded over `layers`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_matrix_gen_extruded(
    nx: usize,
    ny: usize,
    layers: usize,
    out: *mut *mut HsMatrix,
) -> HsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if nx == 0 || ny == 0 || layers == 0 {
            return Err(invalid("grid dimensions must be positive"));
        }
        emit(out, genio::gen_extruded_laplacian(nx, ny, layers).to_csr()?)
    })
}

/// Symmetric matrix with a fraction of heavy rows.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_matrix_gen_skewed(
    n: usize,
    heavy_fraction: f64,
    heavy_nnz: usize,
    light_nnz: usize,
    seed: u64,
    out: *mut *mut HsMatrix,
) -> HsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = SkewedSpec {
            n,
            heavy_fraction,
            heavy_nnz,
            light_nnz,
            seed,
        };
        emit(out, genio::gen_skewed(&spec)?.to_csr()?)
    })
}

/// Releases a matrix. Null is ignored.
///
/// # Safety
/// `m` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hs_matrix_free(m: *mut HsMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be null or a live handle. Returns 0 for null.
#[no_mangle]
pub unsafe extern "C" fn hs_matrix_nrows(m: *const HsMatrix) -> usize {
    m.as_ref().map_or(0, |h| h.inner.nrows())
}

/// # Safety
/// `m` must be null or a live handle. Returns 0 for null.
#[no_mangle]
pub unsafe extern "C" fn hs_matrix_ncols(m: *const HsMatrix) -> usize {
    m.as_ref().map_or(0, |h| h.inner.ncols())
}

/// # Safety
/// `m` must be null or a live handle. Returns 0 for null.
#[no_mangle]
pub unsafe extern "C" fn hs_matrix_nnz(m: *const HsMatrix) -> usize {
    m.as_ref().map_or(0, |h| h.inner.nnz())
}

/// `y = A x` over `ranks` simulated ranks with even row ownership.
///
/// # Safety
/// `x` and `y` must hold `n` elements where `n` is the matrix order.
#[no_mangle]
pub unsafe extern "C" fn hs_spmv(
    m: *const HsMatrix,
    mode: HsMode,
    ranks: usize,
    workers: usize,
    x: *const f64,
    y: *mut f64,
    n: usize,
) -> HsStatus {
    guard(|| {
        let a = matrix(m)?;
        let own = ownership(a, ranks)?;
        if n != a.nrows() {
            return Err(invalid(format!(
                "vector length {n} does not match order {}",
                a.nrows()
            )));
        }
        let (x, y) = (slice(x, n, "x")?, slice_mut(y, n, "y")?);
        let mode = ExecMode::from(mode);
        let parts = spawn_ranks(ranks, RuntimeConfig::default(), |ctx| {
            let dm = split_distributed(a, &own, ctx.rank())?;
            let mut xv = DistVector::from_global(&dm, x)?;
            hybrid_spmv::spmv::spmv(ctx, mode, &dm, &mut xv, workers)
        })?;
        for (dst, src) in y.iter_mut().zip(parts.into_iter().flatten()) {
            *dst = src;
        }
        Ok(())
    })
}

/// Jacobi-preconditioned CG for `A x = b` from a zero initial guess.
/// `max_iters == 0` selects the default cap of 10000. `report` may be null.
///
/// # Safety
/// `b` and `x` must hold `n` elements where `n` is the matrix order.
#[no_mangle]
pub unsafe extern "C" fn hs_cg_solve(
    m: *const HsMatrix,
    mode: HsMode,
    ranks: usize,
    workers: usize,
    b: *const f64,
    x: *mut f64,
    n: usize,
    rtol: f64,
    max_iters: usize,
    report: *mut HsSolveReport,
) -> HsStatus {
    guard(|| {
        let a = matrix(m)?;
        let own = ownership(a, ranks)?;
        if n != a.nrows() {
            return Err(invalid(format!(
                "vector length {n} does not match order {}",
                a.nrows()
            )));
        }
        if rtol.is_nan() || rtol <= 0.0 {
            return Err(invalid("rtol must be positive"));
        }
        let (b, x) = (slice(b, n, "b")?, slice_mut(x, n, "x")?);
        let opts = SolveOptions {
            rtol,
            max_iters: if max_iters == 0 {
                krylov::DEFAULT_MAX_ITERS
            } else {
                max_iters
            },
            mode: mode.into(),
            workers,
        };
        let parts = spawn_ranks(ranks, RuntimeConfig::default(), |ctx| {
            let dm = split_distributed(a, &own, ctx.rank())?;
            let bv = DistVector::from_global(&dm, b)?;
            krylov::cg_solve(ctx, &dm, &bv, &opts)
        })?;
        for (dst, src) in x
            .iter_mut()
            .zip(parts.iter().flat_map(|(v, _)| v.local.iter()))
        {
            *dst = *src;
        }
        if let Some(out) = report.as_mut() {
            let r = &parts[0].1;
            *out = HsSolveReport {
                iterations: r.iterations,
                relative_residual: r.final_relative_residual,
                converged: r.converged,
                spmv_seconds: parts
                    .iter()
                    .map(|(_, r)| r.spmv_time.as_secs_f64())
                    .fold(0.0, f64::max),
                total_seconds: parts
                    .iter()
                    .map(|(_, r)| r.total_time.as_secs_f64())
                    .fold(0.0, f64::max),
            };
        }
        Ok(())
    })
}

/// Splits `len` rows with the given per-row loads among `workers`.
/// Writes `workers + 1` boundaries and, if non-null, the imbalance ratio.
///
/// # Safety
/// `row_nnz` must hold `len` elements and `boundaries` `workers + 1`.
#[no_mangle]
pub unsafe extern "C" fn hs_partition(
    row_nnz: *const usize,
    len: usize,
    workers: usize,
    scheme: HsPartitionScheme,
    boundaries: *mut usize,
    imbalance: *mut f64,
) -> HsStatus {
    guard(|| {
        if workers == 0 {
            return Err(invalid("workers must be at least 1"));
        }
        let loads = slice(row_nnz, len, "row_nnz")?;
        let out = slice_mut(boundaries, workers + 1, "boundaries")?;
        let p = match scheme {
            HsPartitionScheme::EvenRows => partition::partition_rows_even_weighted(loads, workers),
            HsPartitionScheme::BalancedNnz => partition::balanced(loads, workers),
        };
        out.copy_from_slice(p.boundaries());
        if let Some(im) = imbalance.as_mut() {
            *im = p.imbalance();
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_classification() {
        assert_eq!(
            classify(&SpmvError::Parse {
                line: 3,
                message: "x".into()
            }),
            HsStatus::ParseError
        );
        assert_eq!(
            classify(&SpmvError::Divergence { iteration: 2 }),
            HsStatus::Diverged
        );
        let nested = SpmvError::RankFailures(vec![(1, SpmvError::ZeroDiagonal { row: 4 })]);
        assert_eq!(classify(&nested), HsStatus::InvalidArgument);
        let stall = SpmvError::Stalled {
            rank: 0,
            peer: Some(1),
            op: "recv",
        };
        assert_eq!(classify(&stall), HsStatus::Stalled);
    }

    #[test]
    fn panic_becomes_status() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, HsStatus::Panic);
        let msg = unsafe { CStr::from_ptr(hs_last_error_message()) };
        assert!(msg.to_str().unwrap().contains("boom"));
    }

    #[test]
    fn modes_map_one_to_one() {
        let all = [
            HsMode::Flat,
            HsMode::Vector,
            HsMode::Task,
            HsMode::TaskBalanced,
        ];
        let mapped: Vec<ExecMode> = all.iter().map(|&m| m.into()).collect();
        assert_eq!(mapped, ExecMode::ALL.to_vec());
    }
}
