//! C interface to the greenwood library.
//!
//! Every fallible function returns a [`GwStatus`]. On failure a message is
//! available from [`gw_last_error_message`] on the calling thread until the
//! next failing call on that thread. Tables are opaque handles created by
//! `gw_table_load` or `gw_table_build` and released with `gw_table_free`.
//! Distribution arguments are strings such as `"gaussian"`, `"stable(1.5)"`,
//! `"t(2)"` or `"gpd(0.5)"`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use greenwood::critical::{build_quantile_table, QuantileRequest, QuantileTable, Side};
use greenwood::distributions::{DistributionSpec, RngStream};
use greenwood::error::Error;
use greenwood::hypothesis::{TestKind, TestSpec};
use greenwood::statistic::{classical_greenwood, modified_greenwood_of};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidSample = 3,
    MissingEntry = 4,
    Io = 5,
    Format = 6,
    Panic = 7,
}

/// Tail of a quantile table entry.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GwSide {
    Upper = 0,
    Lower = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GwTestKind {
    Mg1 = 0,
    Mg2 = 1,
    Mg3Gpd = 2,
    Mg4StudentT = 3,
    MgTwoSided = 4,
    JarqueBera = 5,
    KolmogorovSmirnov = 6,
}

/// Outcome of one test. Unused thresholds are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GwTestResult {
    pub statistic: f64,
    pub lower_threshold: f64,
    pub upper_threshold: f64,
    pub n: usize,
    pub reject: bool,
}

/// Opaque quantile table.
pub struct GwQuantileTable {
    inner: QuantileTable,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let text = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

struct Failure(GwStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidParameter(_) | Error::DuplicateRequest(_) => GwStatus::InvalidArgument,
            Error::InvalidSample(_) => GwStatus::InvalidSample,
            Error::MissingEntry(_) => GwStatus::MissingEntry,
            Error::Io(_) => GwStatus::Io,
            Error::SchemaVersion(_) | Error::Format(_) | Error::Json(_) => GwStatus::Format,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(GwStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GwStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            GwStatus::Panic
        }
    }
}

unsafe fn slice<'a>(values: *const f64, len: usize) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if values.is_null() {
        return Err(null("values"));
    }
    Ok(std::slice::from_raw_parts(values, len))
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Failure(GwStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn spec(s: *const c_char, what: &str) -> Result<DistributionSpec, Failure> {
    text(s, what)?.parse::<DistributionSpec>().map_err(Failure::from)
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    out.write(value);
    Ok(())
}

impl From<GwSide> for Side {
    fn from(s: GwSide) -> Self {
        match s {
            GwSide::Upper => Side::Upper,
            GwSide::Lower => Side::Lower,
        }
    }
}

impl From<GwTestKind> for TestKind {
    fn from(k: GwTestKind) -> Self {
        match k {
            GwTestKind::Mg1 => TestKind::Mg1,
            GwTestKind::Mg2 => TestKind::Mg2,
            GwTestKind::Mg3Gpd => TestKind::Mg3Gpd,
            GwTestKind::Mg4StudentT => TestKind::Mg4StudentT,
            GwTestKind::MgTwoSided => TestKind::MgTwoSided,
            GwTestKind::JarqueBera => TestKind::JarqueBera,
            GwTestKind::KolmogorovSmirnov => TestKind::KolmogorovSmirnov,
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn gw_status_string(status: GwStatus) -> *const c_char {
    let s: &'static str = match status {
        GwStatus::Ok => "ok\0",
        GwStatus::NullPointer => "null pointer\0",
        GwStatus::InvalidArgument => "invalid argument\0",
        GwStatus::InvalidSample => "invalid sample\0",
        GwStatus::MissingEntry => "missing quantile table entry\0",
        GwStatus::Io => "i/o error\0",
        GwStatus::Format => "malformed input\0",
        GwStatus::Panic => "internal panic\0",
    };
    s.as_ptr().cast()
}

/// Message of the last failure on this thread, or an empty string. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gw_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Modified Greenwood statistic of `len` values.
///
/// # Safety
/// `values` must point to `len` readable doubles and `out` to one writable
/// double.
#[no_mangle]
pub unsafe extern "C" fn gw_modified_greenwood(values: *const f64, len: usize, out: *mut f64) -> GwStatus {
    guard(|| {
        let x = slice(values, len)?;
        write(out, modified_greenwood_of(x)?.s_n)
    })
}

/// Classical Greenwood statistic of `len` strictly positive values.
///
/// # Safety
/// As for `gw_modified_greenwood`.
#[no_mangle]
pub unsafe extern "C" fn gw_classical_greenwood(values: *const f64, len: usize, out: *mut f64) -> GwStatus {
    guard(|| {
        let x = slice(values, len)?;
        write(out, classical_greenwood(x)?.s_n)
    })
}

/// Fills `out` with `len` draws from `spec`, reproducibly for a given
/// `(seed, stream)`.
///
/// # Safety
/// `spec` must be a NUL-terminated string and `out` must point to `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gw_sample(spec: *const c_char, seed: u64, stream: u64, out: *mut f64, len: usize) -> GwStatus {
    guard(|| {
        let spec = self::spec(spec, "spec")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let x = spec.sample(len, RngStream::new(seed, stream))?;
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&x);
        Ok(())
    })
}

/// Loads a quantile table JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gw_table_load(path: *const c_char, out: *mut *mut GwQuantileTable) -> GwStatus {
    guard(|| {
        let path = text(path, "path")?;
        let inner = QuantileTable::load(Path::new(path))?;
        write(out, Box::into_raw(Box::new(GwQuantileTable { inner })))
    })
}

/// Simulates `m` null statistics for each of the `ns_len` sample sizes and
/// records the quantile for `(c, side)`.
///
/// # Safety
/// `spec` must be a NUL-terminated string, `ns` must point to `ns_len`
/// sizes and `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gw_table_build(
    spec: *const c_char,
    ns: *const usize,
    ns_len: usize,
    c: f64,
    side: GwSide,
    m: usize,
    seed: u64,
    out: *mut *mut GwQuantileTable,
) -> GwStatus {
    guard(|| {
        let spec = self::spec(spec, "spec")?;
        if ns.is_null() && ns_len > 0 {
            return Err(null("ns"));
        }
        let ns = if ns_len == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(ns, ns_len)
        };
        let requests: Vec<_> = ns
            .iter()
            .map(|&n| QuantileRequest::new(spec, n, c, side.into()))
            .collect();
        let inner = build_quantile_table(&requests, m, RngStream::new(seed, 0))?;
        write(out, Box::into_raw(Box::new(GwQuantileTable { inner })))
    })
}

/// Writes `table` as JSON, replacing `path` atomically.
///
/// # Safety
/// `table` must come from this library and `path` must be a NUL-terminated
/// string.
#[no_mangle]
pub unsafe extern "C" fn gw_table_save(table: *const GwQuantileTable, path: *const c_char) -> GwStatus {
    guard(|| {
        let table = table.as_ref().ok_or_else(|| null("table"))?;
        let path = text(path, "path")?;
        table.inner.save(Path::new(path)).map_err(Failure::from)
    })
}

/// Number of entries in `table`; 0 for a null handle.
///
/// # Safety
/// `table` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn gw_table_len(table: *const GwQuantileTable) -> usize {
    table.as_ref().map_or(0, |t| t.inner.len())
}

/// Critical value for `(spec, n, c, side)`.
///
/// # Safety
/// `table` must come from this library, `spec` must be a NUL-terminated
/// string and `out` must point to one writable double.
#[no_mangle]
pub unsafe extern "C" fn gw_table_critical_value(
    table: *const GwQuantileTable,
    spec: *const c_char,
    n: usize,
    c: f64,
    side: GwSide,
    out: *mut f64,
) -> GwStatus {
    guard(|| {
        let table = table.as_ref().ok_or_else(|| null("table"))?;
        let spec = self::spec(spec, "spec")?;
        write(out, table.inner.critical_value(&spec, n, c, side.into())?)
    })
}

/// Releases a table. Null is ignored.
///
/// # Safety
/// `table` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gw_table_free(table: *mut GwQuantileTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Runs one test at level `c`. `null_spec` is required for the two-sided
/// test and ignored otherwise; `table` may be null for the JB and KS tests.
///
/// # Safety
/// Pointers must be null or valid as described; `values` must point to
/// `len` readable doubles and `out` to one writable result.
#[no_mangle]
pub unsafe extern "C" fn gw_test_run(
    table: *const GwQuantileTable,
    kind: GwTestKind,
    null_spec: *const c_char,
    c: f64,
    values: *const f64,
    len: usize,
    out: *mut GwTestResult,
) -> GwStatus {
    guard(|| {
        let kind = TestKind::from(kind);
        let test = if kind == TestKind::MgTwoSided {
            TestSpec::two_sided(spec(null_spec, "null_spec")?, c)?
        } else {
            TestSpec::new(kind, c)?
        };
        let x = slice(values, len)?;
        let table = table.as_ref().map(|t| &t.inner);
        test.check_coverage(table, None, x.len())?;
        let outcome = test.run(x, table)?;
        let (lower, upper) = match (kind, outcome.thresholds.as_slice()) {
            (TestKind::MgTwoSided, [lo, hi]) => (*lo, *hi),
            (TestKind::Mg1 | TestKind::Mg3Gpd | TestKind::Mg4StudentT, [t]) => (*t, f64::NAN),
            (_, [t]) => (f64::NAN, *t),
            _ => (f64::NAN, f64::NAN),
        };
        write(
            out,
            GwTestResult {
                statistic: outcome.statistic,
                lower_threshold: lower,
                upper_threshold: upper,
                n: outcome.n,
                reject: outcome.reject,
            },
        )
    })
}
