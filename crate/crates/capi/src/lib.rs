//! C ABI over `ec3-core`.
//!
//! Inputs are assembled on an opaque [`Ec3Input`] builder, fused into an
//! opaque [`Ec3Result`], and copied out into caller-owned buffers. Every
//! fallible call returns an [`Ec3Status`]; the message of the most recent
//! failure on the calling thread is available from
//! [`ec3_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use ec3_core::objective::WeightConstraint;
use ec3_core::{EnsembleInput, Error, ErrorKind, FuseOptions, Mode, ObjectiveParams, SolverConfig, Sweep};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ec3Status {
    Ok = 0,
    /// Null pointer or wrong buffer length.
    InvalidArgument = 1,
    /// Input or parameters rejected by the library.
    Validation = 2,
    /// Numerical failure while scaling or solving.
    Numerical = 3,
    Io = 4,
    /// A Rust panic was caught at the boundary.
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ec3Mode {
    Ec3 = 0,
    Iec3 = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ec3Constraint {
    /// alpha + beta + gamma + delta = 1
    UnitSum = 0,
    /// alpha/2 + beta/2 + gamma + delta = 1
    HalfWeighted = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ec3Sweep {
    GaussSeidel = 0,
    Jacobi = 1,
}

/// Solver settings. Start from [`ec3_config_default`] and change fields.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ec3Config {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    /// An [`Ec3Constraint`] value.
    pub constraint: u32,
    pub epsilon: f64,
    pub max_iterations: u32,
    pub seed: u64,
    /// An [`Ec3Mode`] value.
    pub mode: u32,
    /// An [`Ec3Sweep`] value.
    pub sweep: u32,
}

fn bad_enum(field: &str, v: u32) -> Error {
    Error::InvalidParams(format!("{field} = {v} is not a valid value"))
}

impl Ec3Config {
    fn to_options(self) -> Result<FuseOptions, Error> {
        let constraint = match self.constraint {
            x if x == Ec3Constraint::UnitSum as u32 => WeightConstraint::UnitSum,
            x if x == Ec3Constraint::HalfWeighted as u32 => WeightConstraint::HalfWeighted,
            x => return Err(bad_enum("constraint", x)),
        };
        let mode = match self.mode {
            x if x == Ec3Mode::Ec3 as u32 => Mode::Ec3,
            x if x == Ec3Mode::Iec3 as u32 => Mode::Iec3,
            x => return Err(bad_enum("mode", x)),
        };
        let sweep = match self.sweep {
            x if x == Ec3Sweep::GaussSeidel as u32 => Sweep::GaussSeidel,
            x if x == Ec3Sweep::Jacobi as u32 => Sweep::Jacobi,
            x => return Err(bad_enum("sweep", x)),
        };
        let params = ObjectiveParams::with_constraint(self.alpha, self.beta, self.gamma, self.delta, constraint)?;
        let solver = SolverConfig {
            params,
            epsilon: self.epsilon,
            max_iterations: self.max_iterations as usize,
            mode,
            seed: self.seed,
            sweep,
            normalized_delta: false,
        };
        solver.validate()?;
        Ok(FuseOptions {
            solver,
            ..FuseOptions::default()
        })
    }
}

/// Base-method outputs for one set of objects.
pub struct Ec3Input {
    num_objects: usize,
    num_classes: usize,
    classifiers: Vec<Vec<usize>>,
    clusterings: Vec<Vec<i64>>,
}

/// Fused class distributions.
pub struct Ec3Result {
    distributions: Vec<f64>,
    labels: Vec<u32>,
    num_objects: usize,
    num_classes: usize,
    iterations: usize,
    converged: bool,
    objective: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: Ec3Status, msg: impl Into<String>) -> Ec3Status {
    set_error(msg);
    status
}

fn from_error(e: &Error) -> Ec3Status {
    let status = match e.kind() {
        ErrorKind::Validation => Ec3Status::Validation,
        ErrorKind::Numerical => Ec3Status::Numerical,
        ErrorKind::Io => Ec3Status::Io,
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning a panic into [`Ec3Status::Panic`].
fn guard(f: impl FnOnce() -> Ec3Status) -> Ec3Status {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(Ec3Status::Panic, format!("internal error: {msg}"))
        }
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(Ec3Status::InvalidArgument, concat!(stringify!($p), " is null"));
        })+
    };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ec3_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn ec3_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Default settings: weights (0.25, 0.35, 0.35, 0.05) under the unit-sum
/// constraint, epsilon 0.025, 500 iterations, seed 0, iEC3, Gauss-Seidel.
#[no_mangle]
pub extern "C" fn ec3_config_default() -> Ec3Config {
    let d = SolverConfig::default();
    Ec3Config {
        alpha: d.params.alpha,
        beta: d.params.beta,
        gamma: d.params.gamma,
        delta: d.params.delta,
        constraint: Ec3Constraint::UnitSum as u32,
        epsilon: d.epsilon,
        max_iterations: d.max_iterations as u32,
        seed: d.seed,
        mode: Ec3Mode::Iec3 as u32,
        sweep: Ec3Sweep::GaussSeidel as u32,
    }
}

/// Creates an empty input for `num_objects` objects and `num_classes`
/// classes. Free it with [`ec3_input_free`].
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn ec3_input_new(num_objects: usize, num_classes: usize, out: *mut *mut Ec3Input) -> Ec3Status {
    guard(|| {
        non_null!(out);
        if num_objects == 0 || num_classes == 0 {
            return fail(Ec3Status::Validation, "num_objects and num_classes must be positive");
        }
        let input = Box::new(Ec3Input {
            num_objects,
            num_classes,
            classifiers: Vec::new(),
            clusterings: Vec::new(),
        });
        *out = Box::into_raw(input);
        Ec3Status::Ok
    })
}

/// Appends a classifier's labels, one per object, in `1..=num_classes`.
///
/// # Safety
/// `input` must come from [`ec3_input_new`]; `labels` must point to `len`
/// readable values.
#[no_mangle]
pub unsafe extern "C" fn ec3_input_add_classifier(input: *mut Ec3Input, labels: *const u32, len: usize) -> Ec3Status {
    guard(|| {
        non_null!(input, labels);
        let input = &mut *input;
        if len != input.num_objects {
            return fail(
                Ec3Status::InvalidArgument,
                format!("classifier has {len} labels, expected {}", input.num_objects),
            );
        }
        let labels = slice::from_raw_parts(labels, len);
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l == 0 || l as usize > input.num_classes) {
            return fail(
                Ec3Status::Validation,
                format!("label {l} of object {i} outside 1..={}", input.num_classes),
            );
        }
        input.classifiers.push(labels.iter().map(|&l| l as usize).collect());
        Ec3Status::Ok
    })
}

/// Appends a clustering given as arbitrary integer cluster ids.
///
/// # Safety
/// `input` must come from [`ec3_input_new`]; `ids` must point to `len`
/// readable values.
#[no_mangle]
pub unsafe extern "C" fn ec3_input_add_clustering(input: *mut Ec3Input, ids: *const i64, len: usize) -> Ec3Status {
    guard(|| {
        non_null!(input, ids);
        let input = &mut *input;
        if len != input.num_objects {
            return fail(
                Ec3Status::InvalidArgument,
                format!("clustering has {len} ids, expected {}", input.num_objects),
            );
        }
        input.clusterings.push(slice::from_raw_parts(ids, len).to_vec());
        Ec3Status::Ok
    })
}

/// # Safety
/// `input` must be NULL or come from [`ec3_input_new`] and not be freed yet.
#[no_mangle]
pub unsafe extern "C" fn ec3_input_free(input: *mut Ec3Input) {
    if !input.is_null() {
        drop(Box::from_raw(input));
    }
}

/// Fuses `input` under `config` (NULL for defaults). Free the result with
/// [`ec3_result_free`].
///
/// # Safety
/// `input` must come from [`ec3_input_new`]; `config` must be NULL or
/// valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ec3_fuse(input: *const Ec3Input, config: *const Ec3Config, out: *mut *mut Ec3Result) -> Ec3Status {
    guard(|| {
        non_null!(input, out);
        let input = &*input;
        let config = if config.is_null() { ec3_config_default() } else { *config };
        let options = match config.to_options() {
            Ok(o) => o,
            Err(e) => return from_error(&e),
        };
        let ensemble = match EnsembleInput::new(
            input.num_classes,
            input.classifiers.clone(),
            input.clusterings.clone(),
            None,
        ) {
            Ok(e) => e,
            Err(e) => return from_error(&e),
        };
        let fused = match ec3_core::fuse(&ensemble, &options) {
            Ok(f) => f,
            Err(e) => return from_error(&e),
        };
        let r = &fused.result;
        let fo = &r.distributions.objects;
        let result = Box::new(Ec3Result {
            distributions: fo.iter().copied().collect(),
            labels: r.labels().into_iter().map(|l| l as u32).collect(),
            num_objects: fo.nrows(),
            num_classes: fo.ncols(),
            iterations: r.iterations_used,
            converged: r.converged,
            objective: r.final_objective(),
        });
        *out = Box::into_raw(result);
        Ec3Status::Ok
    })
}

/// # Safety
/// `result` must come from [`ec3_fuse`].
#[no_mangle]
pub unsafe extern "C" fn ec3_result_num_objects(result: *const Ec3Result) -> usize {
    result.as_ref().map_or(0, |r| r.num_objects)
}

/// # Safety
/// `result` must come from [`ec3_fuse`].
#[no_mangle]
pub unsafe extern "C" fn ec3_result_num_classes(result: *const Ec3Result) -> usize {
    result.as_ref().map_or(0, |r| r.num_classes)
}

/// # Safety
/// `result` must come from [`ec3_fuse`].
#[no_mangle]
pub unsafe extern "C" fn ec3_result_iterations(result: *const Ec3Result) -> usize {
    result.as_ref().map_or(0, |r| r.iterations)
}

/// # Safety
/// `result` must come from [`ec3_fuse`].
#[no_mangle]
pub unsafe extern "C" fn ec3_result_converged(result: *const Ec3Result) -> bool {
    result.as_ref().is_some_and(|r| r.converged)
}

/// Objective value of the returned distributions; NaN for a NULL result.
///
/// # Safety
/// `result` must come from [`ec3_fuse`].
#[no_mangle]
pub unsafe extern "C" fn ec3_result_objective(result: *const Ec3Result) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.objective)
}

/// Copies the `num_objects x num_classes` distributions, row-major, into
/// `out`, which must hold exactly that many values.
///
/// # Safety
/// `result` must come from [`ec3_fuse`]; `out` must point to `len`
/// writable values.
#[no_mangle]
pub unsafe extern "C" fn ec3_result_copy_distributions(result: *const Ec3Result, out: *mut f64, len: usize) -> Ec3Status {
    guard(|| {
        non_null!(result, out);
        let r = &*result;
        if len != r.distributions.len() {
            return fail(
                Ec3Status::InvalidArgument,
                format!("buffer holds {len} values, need {}", r.distributions.len()),
            );
        }
        slice::from_raw_parts_mut(out, len).copy_from_slice(&r.distributions);
        Ec3Status::Ok
    })
}

/// Copies the 1-based argmax labels into `out` (`num_objects` values).
///
/// # Safety
/// `result` must come from [`ec3_fuse`]; `out` must point to `len`
/// writable values.
#[no_mangle]
pub unsafe extern "C" fn ec3_result_copy_labels(result: *const Ec3Result, out: *mut u32, len: usize) -> Ec3Status {
    guard(|| {
        non_null!(result, out);
        let r = &*result;
        if len != r.labels.len() {
            return fail(
                Ec3Status::InvalidArgument,
                format!("buffer holds {len} values, need {}", r.labels.len()),
            );
        }
        slice::from_raw_parts_mut(out, len).copy_from_slice(&r.labels);
        Ec3Status::Ok
    })
}

/// # Safety
/// `result` must be NULL or come from [`ec3_fuse`] and not be freed yet.
#[no_mangle]
pub unsafe extern "C" fn ec3_result_free(result: *mut Ec3Result) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// AUC of row-major `num_objects x num_classes` scores against 1-based
/// labels: binary AUC of class 2 when there are two classes, macro
/// one-vs-rest otherwise.
///
/// # Safety
/// `scores` must point to `num_objects * num_classes` values, `truth` to
/// `num_objects` values and `out` to one writable value.
#[no_mangle]
pub unsafe extern "C" fn ec3_auc(
    scores: *const f64,
    num_objects: usize,
    num_classes: usize,
    truth: *const u32,
    out: *mut f64,
) -> Ec3Status {
    guard(|| {
        non_null!(scores, truth, out);
        let Some(total) = num_objects.checked_mul(num_classes) else {
            return fail(Ec3Status::InvalidArgument, "num_objects * num_classes overflows");
        };
        let s = slice::from_raw_parts(scores, total);
        let view = match ndarray::ArrayView2::from_shape((num_objects, num_classes), s) {
            Ok(v) => v,
            Err(e) => return fail(Ec3Status::InvalidArgument, e.to_string()),
        };
        let t: Vec<usize> = slice::from_raw_parts(truth, num_objects).iter().map(|&v| v as usize).collect();
        match ec3_core::auc(view, &t) {
            Ok(a) => {
                *out = a;
                Ec3Status::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}
