//! C ABI for `stickyflow`.
//!
//! Objects cross the boundary as opaque handles created by `sf_*_new` and
//! released by the matching `sf_*_free`. Every fallible call returns an
//! [`SfStatus`]; on failure a message is kept per thread and can be read with
//! [`sf_last_error_message`]. Panics are caught at the boundary and reported
//! as [`SfStatus::Panic`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use stickyflow::chaos::{build_propagators, ChaosExpansion, SpaceGrid};
use stickyflow::config::{ExperimentConfig, Suite};
use stickyflow::kernel_flow::{g_transform, kernel_apply, kernel_measure, make_da_function, TestFunction};
use stickyflow::paths::{sample_brownian, BrownianPath, TimeGrid};
use stickyflow::semigroup::{g_fn, SemigroupParams, TransitionKernel};
use stickyflow::sticky_sim::{occupation_time, simulate_sticky, StickyParams, StickyPath, TimeChangeConfig};
use stickyflow::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// A test function outside the class an operation needs.
    FunctionClass = 3,
    /// Request exceeds a hard size cap.
    CostGuard = 4,
    Config = 5,
    Io = 6,
    /// A check suite ran but at least one check failed.
    ChecksFailed = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| {
        let mut b = msg.into_bytes();
        b.retain(|&c| c != 0);
        b.push(0);
        *e.borrow_mut() = b;
    });
}

fn fail(status: SfStatus, msg: impl Into<String>) -> SfStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> SfStatus {
    let status = match e {
        Error::InvalidParameter { .. }
        | Error::IndexOrder(_)
        | Error::SourceTooShort { .. }
        | Error::HorizonOverflow { .. } => SfStatus::InvalidArgument,
        Error::FunctionClass { .. } => SfStatus::FunctionClass,
        Error::CostGuard(_) => SfStatus::CostGuard,
        Error::Config(_) => SfStatus::Config,
        Error::Io(_) => SfStatus::Io,
    };
    fail(status, e.to_string())
}

/// Runs `body` behind a panic guard and clears the error slot on success.
fn guard<F: FnOnce() -> Result<(), SfStatus>>(body: F) -> SfStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| e.borrow_mut().clear());
            SfStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(SfStatus::Panic, format!("panic: {msg}"))
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, SfStatus>;
}

impl<T> OrStatus<T> for stickyflow::Result<T> {
    fn or_status(self) -> Result<T, SfStatus> {
        self.map_err(from_error)
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, SfStatus> {
    p.as_ref()
        .ok_or_else(|| fail(SfStatus::NullPointer, format!("`{name}` is null")))
}

unsafe fn write<T>(out: *mut T, value: T, name: &str) -> Result<(), SfStatus> {
    if out.is_null() {
        return Err(fail(SfStatus::NullPointer, format!("`{name}` is null")));
    }
    out.write(value);
    Ok(())
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize, written: *mut usize) -> Result<(), SfStatus> {
    if !written.is_null() {
        written.write(src.len());
    }
    if len < src.len() {
        return Err(fail(
            SfStatus::InvalidArgument,
            format!("buffer holds {len} values, need {}", src.len()),
        ));
    }
    if buf.is_null() {
        return Err(fail(SfStatus::NullPointer, "`buf` is null"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, SfStatus> {
    if p.is_null() {
        return Err(fail(SfStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SfStatus::InvalidArgument, format!("`{name}` is not UTF-8")))
}

/// Last error message on this thread, NUL-terminated, or null if the last call succeeded.
/// Valid until the next `sf_*` call on the same thread.
#[no_mangle]
pub extern "C" fn sf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| {
        let b = e.borrow();
        if b.is_empty() {
            ptr::null()
        } else {
            b.as_ptr().cast()
        }
    })
}

/// Library version, NUL-terminated, static.
#[no_mangle]
pub extern "C" fn sf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---------------------------------------------------------------- functions

/// Test function handle.
pub struct SfTestFunction(TestFunction);

/// `(a + b y + c y^2) e^{-y}` satisfying the sticky boundary condition at `theta`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_function_new_da(
    a: f64,
    b: f64,
    c: f64,
    theta: f64,
    out: *mut *mut SfTestFunction,
) -> SfStatus {
    guard(|| {
        let f = make_da_function(a, b, c, theta).or_status()?;
        write(out, Box::into_raw(Box::new(SfTestFunction(f))), "out")
    })
}

/// `(a + b y + c y^2) e^{-rate y}`, with no boundary condition imposed.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_function_new_exp_poly(
    a: f64,
    b: f64,
    c: f64,
    rate: f64,
    out: *mut *mut SfTestFunction,
) -> SfStatus {
    guard(|| {
        if !(rate > 0.0) {
            return Err(fail(
                SfStatus::InvalidArgument,
                format!("rate must be positive, got {rate}"),
            ));
        }
        write(
            out,
            Box::into_raw(Box::new(SfTestFunction(TestFunction::exp_poly(a, b, c, rate)))),
            "out",
        )
    })
}

/// # Safety
/// `f` must come from an `sf_function_new_*` call and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sf_function_free(f: *mut SfTestFunction) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// `f(y)`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_function_value(f: *const SfTestFunction, y: f64, out: *mut f64) -> SfStatus {
    guard(|| write(out, deref(f, "f")?.0.value(y), "out"))
}

/// `G_f(y) = E f((y - T)^+)`, `T ~ Exp(2 theta)`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_g_transform(f: *const SfTestFunction, theta: f64, y: f64, out: *mut f64) -> SfStatus {
    guard(|| {
        let v = g_transform(&deref(f, "f")?.0, theta, y).or_status()?;
        write(out, v, "out")
    })
}

// ---------------------------------------------------------------- semigroup

/// `g_t(x)`; the atom of `P_t(x, .)` at zero is `g_t(x) / theta`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_g(theta: f64, t: f64, x: f64, out: *mut f64) -> SfStatus {
    guard(|| write(out, g_fn(theta, t, x).or_status()?, "out"))
}

/// Sticky transition kernel handle.
pub struct SfKernel(TransitionKernel);

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_kernel_new(theta: f64, t: f64, out: *mut *mut SfKernel) -> SfStatus {
    guard(|| {
        let k = TransitionKernel::new(SemigroupParams::new(theta, t).or_status()?);
        write(out, Box::into_raw(Box::new(SfKernel(k))), "out")
    })
}

/// # Safety
/// `k` must come from [`sf_kernel_new`]. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sf_kernel_free(k: *mut SfKernel) {
    if !k.is_null() {
        drop(Box::from_raw(k));
    }
}

fn check_state(name: &str, v: f64) -> Result<(), SfStatus> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(fail(SfStatus::InvalidArgument, format!("{name} must be >= 0, got {v}")))
    }
}

/// Density of `P_t(x, dy)` at `y > 0` and the atom at 0.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_kernel_density(
    k: *const SfKernel,
    x: f64,
    y: f64,
    density: *mut f64,
    atom: *mut f64,
) -> SfStatus {
    guard(|| {
        let k = &deref(k, "k")?.0;
        check_state("x", x)?;
        check_state("y", y)?;
        write(density, k.density(x, y), "density")?;
        write(atom, k.atom(x), "atom")
    })
}

/// `P_t f(x)`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_kernel_apply(
    k: *const SfKernel,
    f: *const SfTestFunction,
    x: f64,
    out: *mut f64,
) -> SfStatus {
    guard(|| {
        let (k, f) = (&deref(k, "k")?.0, &deref(f, "f")?.0);
        check_state("x", x)?;
        write(out, k.apply(f, x), "out")
    })
}

// ---------------------------------------------------------------- paths

/// Brownian path handle.
pub struct SfPath(BrownianPath);

/// Brownian path with `n_steps` steps on `[0, t_end]`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_path_sample(t_end: f64, n_steps: usize, seed: u64, out: *mut *mut SfPath) -> SfStatus {
    guard(|| {
        let grid = TimeGrid::uniform(t_end, n_steps).or_status()?;
        write(out, Box::into_raw(Box::new(SfPath(sample_brownian(grid, seed)))), "out")
    })
}

/// Path from `n_steps + 1` explicit values on `[0, t_end]`; shifted to start at 0.
///
/// # Safety
/// `values` must point to `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_path_from_values(
    t_end: f64,
    values: *const f64,
    len: usize,
    out: *mut *mut SfPath,
) -> SfStatus {
    guard(|| {
        if values.is_null() {
            return Err(fail(SfStatus::NullPointer, "`values` is null"));
        }
        if len < 2 {
            return Err(fail(SfStatus::InvalidArgument, "need at least 2 values"));
        }
        let grid = TimeGrid::uniform(t_end, len - 1).or_status()?;
        let v = std::slice::from_raw_parts(values, len).to_vec();
        let p = BrownianPath::from_values(grid, v, 0).or_status()?;
        write(out, Box::into_raw(Box::new(SfPath(p))), "out")
    })
}

/// # Safety
/// `p` must come from an `sf_path_*` constructor. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sf_path_free(p: *mut SfPath) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Copies the path values into `buf` (capacity `len`); `written` receives the
/// number of points even when the buffer is too small.
///
/// # Safety
/// `buf` must hold `len` doubles; `written` may be null.
#[no_mangle]
pub unsafe extern "C" fn sf_path_values(p: *const SfPath, buf: *mut f64, len: usize, written: *mut usize) -> SfStatus {
    guard(|| copy_out(deref(p, "p")?.0.values(), buf, len, written))
}

/// `K_{s,t} f(x)` for the flow of kernels driven by the path, grid indices `s <= t`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_flow_apply(
    p: *const SfPath,
    s: usize,
    t: usize,
    x: f64,
    theta: f64,
    f: *const SfTestFunction,
    out: *mut f64,
) -> SfStatus {
    guard(|| {
        let (p, f) = (&deref(p, "p")?.0, &deref(f, "f")?.0);
        let k = kernel_measure(p, s, t, x, theta).or_status()?;
        write(out, kernel_apply(&k, f), "out")
    })
}

// ---------------------------------------------------------------- sticky paths

/// Sticky path handle.
pub struct SfStickyPath(StickyPath);

/// Sticky Brownian motion from 0 on `n_steps` output steps over `[0, t_end]`,
/// time-changed from a source with `n_steps * source_factor` steps.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_sticky_simulate(
    theta: f64,
    t_end: f64,
    n_steps: usize,
    source_factor: usize,
    seed: u64,
    out: *mut *mut SfStickyPath,
) -> SfStatus {
    guard(|| {
        if source_factor == 0 {
            return Err(fail(SfStatus::InvalidArgument, "source_factor must be >= 1"));
        }
        let params = StickyParams::new(theta).or_status()?;
        let out_grid = TimeGrid::uniform(t_end, n_steps).or_status()?;
        let src = TimeGrid::uniform(t_end, n_steps.saturating_mul(source_factor)).or_status()?;
        let p = simulate_sticky(&params, out_grid, src, seed, &TimeChangeConfig::default()).or_status()?;
        write(out, Box::into_raw(Box::new(SfStickyPath(p))), "out")
    })
}

/// # Safety
/// `p` must come from [`sf_sticky_simulate`]. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sf_sticky_free(p: *mut SfStickyPath) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Copies `X` into `buf`; see [`sf_path_values`] for the buffer protocol.
///
/// # Safety
/// `buf` must hold `len` doubles; `written` may be null.
#[no_mangle]
pub unsafe extern "C" fn sf_sticky_values(
    p: *const SfStickyPath,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> SfStatus {
    guard(|| copy_out(deref(p, "p")?.0.x(), buf, len, written))
}

/// Time spent at zero on `[0, t_horizon]`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_sticky_occupation(p: *const SfStickyPath, t_horizon: f64, out: *mut f64) -> SfStatus {
    guard(|| {
        let o = occupation_time(&deref(p, "p")?.0, t_horizon).or_status()?;
        write(out, o.value, "out")
    })
}

// ---------------------------------------------------------------- chaos

/// Truncated chaos expansion handle.
pub struct SfChaos(ChaosExpansion);

/// Chaos coefficients of `E[f(X_t) | W]` up to order `n_max` (at most 3) on
/// `n_steps` time steps and `space_nodes` nodes of `[0, x_max]`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_chaos_new(
    theta: f64,
    t: f64,
    n_steps: usize,
    space_nodes: usize,
    x_max: f64,
    f: *const SfTestFunction,
    n_max: usize,
    out: *mut *mut SfChaos,
) -> SfStatus {
    guard(|| {
        let f = &deref(f, "f")?.0;
        let grid = SpaceGrid::new(x_max, space_nodes).or_status()?;
        let props = build_propagators(theta, t, n_steps, grid).or_status()?;
        let exp = ChaosExpansion::sticky(&props, f, n_max).or_status()?;
        write(out, Box::into_raw(Box::new(SfChaos(exp))), "out")
    })
}

/// # Safety
/// `c` must come from [`sf_chaos_new`]. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sf_chaos_free(c: *mut SfChaos) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Evaluates the expansion on a path with the same number of steps.
/// `terms` receives orders `0..=n_max` (capacity `len`); `truncation` their sum;
/// `reference` the exact `G_f(W_t^+)` of the path.
///
/// # Safety
/// `terms` must hold `len` doubles; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_chaos_evaluate(
    c: *const SfChaos,
    p: *const SfPath,
    terms: *mut f64,
    len: usize,
    truncation: *mut f64,
    reference: *mut f64,
) -> SfStatus {
    guard(|| {
        let r = deref(c, "c")?.0.evaluate(&deref(p, "p")?.0).or_status()?;
        let mut all = vec![r.j0];
        all.extend(&r.terms);
        copy_out(&all, terms, len, ptr::null_mut())?;
        write(truncation, r.truncation, "truncation")?;
        write(reference, r.reference, "reference")
    })
}

// ---------------------------------------------------------------- suites

/// Runs a check suite by its subcommand name (`"warren-check"`, ...).
///
/// `config` is `key = value` text applied over the suite defaults (may be null);
/// `out_dir` overrides the output directory (may be null). `passed` receives 1
/// if every check passed. Returns [`SfStatus::ChecksFailed`] when the suite ran
/// but a check failed.
///
/// # Safety
/// String pointers must be NUL-terminated or null; `passed` may be null.
#[no_mangle]
pub unsafe extern "C" fn sf_run_suite(
    name: *const c_char,
    config: *const c_char,
    out_dir: *const c_char,
    passed: *mut i32,
) -> SfStatus {
    let mut ok = false;
    let status = guard(|| {
        let name = str_arg(name, "name")?;
        let suite = Suite::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| fail(SfStatus::InvalidArgument, format!("unknown suite `{name}`")))?;
        let mut cfg = ExperimentConfig::defaults(suite);
        if !config.is_null() {
            cfg.apply_text(str_arg(config, "config")?).or_status()?;
        }
        if !out_dir.is_null() {
            cfg.out_dir = PathBuf::from(str_arg(out_dir, "out_dir")?);
        }
        cfg.validate(suite).or_status()?;
        let report = stickyflow::suites::run(suite, &cfg).or_status()?;
        ok = report.passed();
        if ok {
            Ok(())
        } else {
            let names: Vec<_> = report.failures().map(|c| c.name.clone()).collect();
            Err(fail(
                SfStatus::ChecksFailed,
                format!("failed checks: {}", names.join("; ")),
            ))
        }
    });
    if !passed.is_null() {
        passed.write(i32::from(ok));
    }
    status
}
