//! C ABI over the `pdsplit` solvers.
//!
//! Problems and runs are opaque handles created and freed through this API.
//! Every fallible call returns a [`PdsStatus`]; the message of the last
//! failure on the calling thread is available from
//! [`pds_last_error_message`]. Configurations are passed as JSON in the same
//! schema the `pdsplit` CLI reads.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pdsplit::bench::{self, BenchProblem, Instance};
use pdsplit::certify::{self, Suite};
use pdsplit::solvers::{run, run_destroy, RunConfig, RunTrace};
use pdsplit::{Error, ProblemSpec};

/// Result codes. `PDS_OK` is zero; everything else is a failure.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PdsStatus {
    PdsOk = 0,
    PdsNullPointer = 1,
    PdsInvalidUtf8 = 2,
    PdsBadJson = 3,
    PdsInvalidParameter = 4,
    PdsStepsizeCondition = 5,
    PdsDimensionMismatch = 6,
    PdsDiverged = 7,
    PdsBufferTooSmall = 8,
    PdsOutOfRange = 9,
    PdsSolverError = 10,
    PdsPanic = 11,
}

/// A problem instance, either composite or decentralized.
pub struct PdsProblem {
    instance: Instance,
}

/// The trace of one finished run.
pub struct PdsRun {
    trace: RunTrace,
}

/// One logged iteration. Quantities that were not computed are NaN.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PdsRecord {
    pub k: u64,
    pub objective: f64,
    pub duality_gap: f64,
    pub kkt_primal: f64,
    pub kkt_dual: f64,
    pub dist_to_oracle: f64,
    pub sigma_sq: f64,
    pub wall_ns: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: PdsStatus, msg: impl Into<String>) -> PdsStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> PdsStatus {
    let status = match &e {
        Error::InvalidParameter(_) | Error::StochasticCondatVu | Error::DisconnectedGraph => {
            PdsStatus::PdsInvalidParameter
        }
        Error::StepsizeCondition(_) => PdsStatus::PdsStepsizeCondition,
        Error::DimensionMismatch { .. } => PdsStatus::PdsDimensionMismatch,
        Error::IndexOutOfRange { .. } => PdsStatus::PdsOutOfRange,
        Error::Diverged { .. } => PdsStatus::PdsDiverged,
        Error::Json(_) | Error::Parse { .. } => PdsStatus::PdsBadJson,
        _ => PdsStatus::PdsSolverError,
    };
    fail(status, e.to_string())
}

/// Runs `body`, turning panics into `PdsPanic`.
fn guard(body: impl FnOnce() -> PdsStatus) -> PdsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(s) => {
            if s == PdsStatus::PdsOk {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(PdsStatus::PdsPanic, format!("internal panic: {msg}"))
        }
    }
}

/// # Safety
/// `s` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, PdsStatus> {
    if s.is_null() {
        return Err(fail(PdsStatus::PdsNullPointer, "null string argument"));
    }
    CStr::from_ptr(s).to_str().map_err(|_| fail(PdsStatus::PdsInvalidUtf8, "argument is not UTF-8"))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pds_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL, or
/// 0 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pds_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Generates a synthetic instance from a benchmark-problem JSON object, e.g.
/// `{"kind":"fused_lasso","n":100,"p":50,"seed":7,"lambda":0.1,"lambda1":5}`.
///
/// # Safety
/// `json` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pds_problem_generate(json: *const c_char, out: *mut *mut PdsProblem) -> PdsStatus {
    guard(|| {
        if out.is_null() {
            return fail(PdsStatus::PdsNullPointer, "null output handle");
        }
        let text = tri!(read_str(json));
        let problem: BenchProblem = tri!(serde_json::from_str(text).map_err(|e| fail(PdsStatus::PdsBadJson, e.to_string())));
        let generated = tri!(bench::generate(&problem).map_err(from_error));
        *out = Box::into_raw(Box::new(PdsProblem { instance: generated.instance }));
        PdsStatus::PdsOk
    })
}

/// Builds a composite problem from a serialized `ProblemSpec`.
///
/// # Safety
/// `json` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pds_problem_from_spec(json: *const c_char, out: *mut *mut PdsProblem) -> PdsStatus {
    guard(|| {
        if out.is_null() {
            return fail(PdsStatus::PdsNullPointer, "null output handle");
        }
        let text = tri!(read_str(json));
        let raw: ProblemSpec = tri!(serde_json::from_str(text).map_err(|e| fail(PdsStatus::PdsBadJson, e.to_string())));
        // recompute the spectral data rather than trusting the document
        let spec = tri!(ProblemSpec::new(raw.f, raw.r, raw.h, raw.l).map_err(from_error));
        *out = Box::into_raw(Box::new(PdsProblem { instance: Instance::Composite(spec) }));
        PdsStatus::PdsOk
    })
}

/// Primal and dual dimensions. For a decentralized problem the primal
/// dimension is that of the stacked node copies and the dual equals it.
///
/// # Safety
/// `problem` must be a live handle; the output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn pds_problem_dims(problem: *const PdsProblem, primal: *mut usize, dual: *mut usize) -> PdsStatus {
    guard(|| {
        let Some(p) = problem.as_ref() else {
            return fail(PdsStatus::PdsNullPointer, "null problem handle");
        };
        let (n, m) = match &p.instance {
            Instance::Composite(spec) => (spec.primal_dim(), spec.dual_dim()),
            Instance::Decentralized(d) => (d.nodes() * d.block_dim, d.nodes() * d.block_dim),
        };
        if !primal.is_null() {
            *primal = n;
        }
        if !dual.is_null() {
            *dual = m;
        }
        PdsStatus::PdsOk
    })
}

/// # Safety
/// `problem` must be null or a handle from this library not freed before.
#[no_mangle]
pub unsafe extern "C" fn pds_problem_free(problem: *mut PdsProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Runs a solver with a `RunConfig` JSON object, e.g.
/// `{"solver":"pd3o","iters":1000,"estimator":{"kind":"lsvrg","p":0.1}}`.
/// A run that diverges still produces a handle; check
/// [`pds_run_diverged`].
///
/// # Safety
/// `problem` must be a live handle, `config` a valid C string and `out` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pds_run(problem: *const PdsProblem, config: *const c_char, out: *mut *mut PdsRun) -> PdsStatus {
    guard(|| {
        if out.is_null() {
            return fail(PdsStatus::PdsNullPointer, "null output handle");
        }
        let Some(p) = problem.as_ref() else {
            return fail(PdsStatus::PdsNullPointer, "null problem handle");
        };
        let text = tri!(read_str(config));
        let cfg: RunConfig = tri!(serde_json::from_str(text).map_err(|e| fail(PdsStatus::PdsBadJson, e.to_string())));
        let trace = match &p.instance {
            Instance::Composite(spec) => run(spec, &cfg, None),
            Instance::Decentralized(d) => run_destroy(d, &cfg, None),
        };
        let trace = tri!(trace.map_err(from_error));
        *out = Box::into_raw(Box::new(PdsRun { trace }));
        PdsStatus::PdsOk
    })
}

/// Number of logged records (at least 1: the initial point).
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pds_run_len(run: *const PdsRun) -> usize {
    run.as_ref().map_or(0, |r| r.trace.records.len())
}

/// Whether the run stopped on divergence; writes the iteration if so.
///
/// # Safety
/// `run` must be null or a live handle; `iteration` may be null.
#[no_mangle]
pub unsafe extern "C" fn pds_run_diverged(run: *const PdsRun, iteration: *mut u64) -> bool {
    match run.as_ref().and_then(|r| r.trace.diverged.as_ref()) {
        Some(d) => {
            if !iteration.is_null() {
                *iteration = d.iteration as u64;
            }
            true
        }
        None => false,
    }
}

/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pds_run_record(run: *const PdsRun, index: usize, out: *mut PdsRecord) -> PdsStatus {
    guard(|| {
        let (Some(r), false) = (run.as_ref(), out.is_null()) else {
            return fail(PdsStatus::PdsNullPointer, "null run handle or output");
        };
        let Some(rec) = r.trace.records.get(index) else {
            return fail(PdsStatus::PdsOutOfRange, format!("record {index} of {}", r.trace.records.len()));
        };
        *out = PdsRecord {
            k: rec.k as u64,
            objective: rec.objective.unwrap_or(f64::NAN),
            duality_gap: rec.duality_gap.unwrap_or(f64::NAN),
            kkt_primal: rec.kkt_primal,
            kkt_dual: rec.kkt_dual,
            dist_to_oracle: rec.dist_to_oracle.unwrap_or(f64::NAN),
            sigma_sq: rec.sigma_sq.unwrap_or(f64::NAN),
            wall_ns: rec.wall_ns,
        };
        PdsStatus::PdsOk
    })
}

/// Copies the final primal iterate into `buf`. `len` must equal the primal
/// dimension.
///
/// # Safety
/// `run` must be a live handle and `buf` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pds_run_primal(run: *const PdsRun, buf: *mut f64, len: usize) -> PdsStatus {
    guard(|| {
        let (Some(r), false) = (run.as_ref(), buf.is_null()) else {
            return fail(PdsStatus::PdsNullPointer, "null run handle or buffer");
        };
        let x = r.trace.final_state.primal();
        if len < x.len() {
            return fail(PdsStatus::PdsBufferTooSmall, format!("need {} doubles, got {len}", x.len()));
        }
        ptr::copy_nonoverlapping(x.as_ptr(), buf, x.len());
        PdsStatus::PdsOk
    })
}

/// Resolved stepsizes of the run.
///
/// # Safety
/// `run` must be a live handle; the output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn pds_run_steps(run: *const PdsRun, gamma: *mut f64, tau: *mut f64) -> PdsStatus {
    guard(|| {
        let Some(r) = run.as_ref() else {
            return fail(PdsStatus::PdsNullPointer, "null run handle");
        };
        if !gamma.is_null() {
            *gamma = r.trace.config.gamma.unwrap_or(f64::NAN);
        }
        if !tau.is_null() {
            *tau = r.trace.config.tau.unwrap_or(f64::NAN);
        }
        PdsStatus::PdsOk
    })
}

/// # Safety
/// `run` must be null or a handle from this library not freed before.
#[no_mangle]
pub unsafe extern "C" fn pds_run_free(run: *mut PdsRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Runs a certification suite (`"identities"`, `"estimators"`, `"rates"`,
/// `"solvers"`, `"infrastructure"` or `"all"`) and reports the counts.
///
/// # Safety
/// `suite` must be a valid C string; the output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn pds_certify(suite: *const c_char, passed: *mut usize, total: *mut usize) -> PdsStatus {
    guard(|| {
        let name = tri!(read_str(suite));
        let suite: Suite = tri!(name.parse().map_err(from_error));
        let results = certify::run_suite(suite);
        if !passed.is_null() {
            *passed = results.iter().filter(|r| r.passed).count();
        }
        if !total.is_null() {
            *total = results.len();
        }
        PdsStatus::PdsOk
    })
}
