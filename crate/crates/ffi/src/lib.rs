//! C ABI for the adadepth library.
//!
//! Objects cross the boundary as opaque handles created by `*_new`,
//! `*_generate`, `*_load` or `adadepth_solve` and released by the matching
//! `*_free`. Fallible functions return an [`AdadepthStatus`]; on failure the
//! message is retrievable with [`adadepth_last_error_message`] on the same
//! thread. Handles are not synchronized: do not share one between threads
//! without external locking.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use adadepth::adaweight::{flipped_sigmoid, shift, steepness};
use adadepth::{
    evaluate, generate, solve, AlphaConfig, DepthMap, Error, ExperimentConfig, Mask, MetricReport,
    ScalarGrid, SceneInstance, Solution,
};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdadepthStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidGrid = 3,
    DimensionMismatch = 4,
    InvalidDomain = 5,
    InvalidScene = 6,
    Config = 7,
    Format = 8,
    Io = 9,
    Diverged = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

impl From<&Error> for AdadepthStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidGrid(_) => Self::InvalidGrid,
            Error::DimensionMismatch { .. } => Self::DimensionMismatch,
            Error::InvalidDomain(_) => Self::InvalidDomain,
            Error::InvalidArgument(_) => Self::InvalidArgument,
            Error::InvalidScene(_) => Self::InvalidScene,
            Error::Config { .. } => Self::Config,
            Error::Format { .. } => Self::Format,
            Error::Diverged { .. } => Self::Diverged,
            Error::Io { .. } => Self::Io,
        }
    }
}

/// Final metrics of a solve or an evaluation. Depth errors in meters,
/// inverse-depth errors in inverse meters.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AdadepthMetrics {
    pub mae: f64,
    pub rmse: f64,
    pub imae: f64,
    pub irmse: f64,
    pub evaluated_pixels: usize,
}

impl From<MetricReport> for AdadepthMetrics {
    fn from(r: MetricReport) -> Self {
        Self {
            mae: r.mae,
            rmse: r.rmse,
            imae: r.imae,
            irmse: r.irmse,
            evaluated_pixels: r.evaluated_pixels,
        }
    }
}

/// Experiment configuration: scene spec plus solver settings.
pub struct AdadepthConfig(ExperimentConfig);

/// A rendered scene with ground truth.
pub struct AdadepthScene(SceneInstance);

/// Result of a solve on a scene.
pub struct AdadepthSolution {
    solution: Solution,
    metrics: MetricReport,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(message: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = message);
}

fn fail(status: AdadepthStatus, message: impl Into<String>) -> AdadepthStatus {
    set_error(message.into());
    status
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), AdadepthStatus>) -> AdadepthStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AdadepthStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(AdadepthStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: adadepth::Result<T>) -> Result<T, AdadepthStatus> {
    r.map_err(|e| fail((&e).into(), e.to_string()))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, AdadepthStatus> {
    p.as_ref()
        .ok_or_else(|| fail(AdadepthStatus::NullPointer, format!("{what} is null")))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, AdadepthStatus> {
    p.as_mut()
        .ok_or_else(|| fail(AdadepthStatus::NullPointer, format!("{what} is null")))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, AdadepthStatus> {
    if p.is_null() {
        return Err(fail(AdadepthStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        fail(
            AdadepthStatus::InvalidArgument,
            format!("{what} is not valid UTF-8"),
        )
    })
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), AdadepthStatus> {
    let slot = borrow_mut(out, "output handle")?;
    *slot = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn copy_grid(grid: &ScalarGrid, out: *mut f64, len: usize) -> Result<(), AdadepthStatus> {
    if out.is_null() {
        return Err(fail(AdadepthStatus::NullPointer, "output buffer is null"));
    }
    let values = grid.values();
    if len < values.len() {
        return Err(fail(
            AdadepthStatus::BufferTooSmall,
            format!("buffer holds {len} values, need {}", values.len()),
        ));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

/// Copies the last error message of this thread into `buf` as a
/// NUL-terminated string, truncating if needed. Returns the full message
/// length in bytes, excluding the terminator. `buf` may be null to query
/// the length.
///
/// # Safety
/// `buf` must be null or valid for writes of `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn adadepth_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// A configuration holding the defaults.
#[no_mangle]
pub extern "C" fn adadepth_config_new() -> *mut AdadepthConfig {
    Box::into_raw(Box::new(AdadepthConfig(ExperimentConfig::default())))
}

/// Reads a `key = value` configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn adadepth_config_load(
    path: *const c_char,
    out: *mut *mut AdadepthConfig,
) -> AdadepthStatus {
    guard(|| {
        let path = PathBuf::from(string(path, "path")?);
        let cfg = lift(ExperimentConfig::load(&path))?;
        store(out, AdadepthConfig(cfg))
    })
}

/// Sets one configuration key. The whole configuration is validated
/// afterwards; on failure it is left unchanged.
///
/// # Safety
/// `cfg` must come from this library; `key` and `value` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn adadepth_config_set(
    cfg: *mut AdadepthConfig,
    key: *const c_char,
    value: *const c_char,
) -> AdadepthStatus {
    guard(|| {
        let cfg = borrow_mut(cfg, "config")?;
        let (key, value) = (string(key, "key")?, string(value, "value")?);
        let mut next = cfg.0.clone();
        if !lift(next.set(key, value))? {
            return Err(fail(
                AdadepthStatus::InvalidArgument,
                format!("unknown key {key:?}"),
            ));
        }
        lift(next.validate())?;
        cfg.0 = next;
        Ok(())
    })
}

/// Uses `seed` for both scene generation and the solver.
///
/// # Safety
/// `cfg` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn adadepth_config_set_seed(
    cfg: *mut AdadepthConfig,
    seed: u64,
) -> AdadepthStatus {
    guard(|| {
        borrow_mut(cfg, "config")?.0.override_seed(seed);
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn adadepth_config_free(cfg: *mut AdadepthConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Renders the scene described by `cfg`.
///
/// # Safety
/// `cfg` must come from this library and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn adadepth_scene_generate(
    cfg: *const AdadepthConfig,
    out: *mut *mut AdadepthScene,
) -> AdadepthStatus {
    guard(|| {
        let cfg = borrow(cfg, "config")?;
        let scene = lift(generate(&cfg.0.scene))?;
        store(out, AdadepthScene(scene))
    })
}

/// Reads a scene directory.
///
/// # Safety
/// `dir` must be NUL-terminated and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn adadepth_scene_load(
    dir: *const c_char,
    out: *mut *mut AdadepthScene,
) -> AdadepthStatus {
    guard(|| {
        let dir = PathBuf::from(string(dir, "dir")?);
        let scene = lift(SceneInstance::load(&dir))?;
        store(out, AdadepthScene(scene))
    })
}

/// Writes a scene directory, creating it if needed.
///
/// # Safety
/// `scene` must come from this library and `dir` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn adadepth_scene_save(
    scene: *const AdadepthScene,
    dir: *const c_char,
) -> AdadepthStatus {
    guard(|| {
        let scene = borrow(scene, "scene")?;
        let dir = PathBuf::from(string(dir, "dir")?);
        lift(scene.0.save(&dir))
    })
}

/// # Safety
/// `scene` must come from this library; `width` and `height` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn adadepth_scene_dims(
    scene: *const AdadepthScene,
    width: *mut usize,
    height: *mut usize,
) -> AdadepthStatus {
    guard(|| {
        let (w, h) = borrow(scene, "scene")?.0.true_depth.dims();
        *borrow_mut(width, "width")? = w;
        *borrow_mut(height, "height")? = h;
        Ok(())
    })
}

/// Copies the ground-truth depth, row-major, into `out`.
///
/// # Safety
/// `scene` must come from this library and `out` be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn adadepth_scene_true_depth(
    scene: *const AdadepthScene,
    out: *mut f64,
    len: usize,
) -> AdadepthStatus {
    guard(|| copy_grid(borrow(scene, "scene")?.0.true_depth.grid(), out, len))
}

/// # Safety
/// `scene` must be null or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn adadepth_scene_free(scene: *mut AdadepthScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Optimizes depth for `scene` with the solver settings of `cfg` and
/// evaluates it against the scene's ground truth.
///
/// # Safety
/// `scene` and `cfg` must come from this library and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn adadepth_solve(
    scene: *const AdadepthScene,
    cfg: *const AdadepthConfig,
    out: *mut *mut AdadepthSolution,
) -> AdadepthStatus {
    guard(|| {
        let scene = &borrow(scene, "scene")?.0;
        let cfg = &borrow(cfg, "config")?.0;
        let problem = lift(scene.problem())?;
        let solution = lift(solve(&problem, &cfg.solver, Some(&scene.true_depth)))?;
        let (w, h) = scene.true_depth.dims();
        let metrics = lift(evaluate(
            &solution.depth,
            &scene.true_depth,
            &Mask::full(w, h),
        ))?;
        store(out, AdadepthSolution { solution, metrics })
    })
}

/// Copies the solved depth, row-major, into `out`.
///
/// # Safety
/// `solution` must come from this library and `out` be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn adadepth_solution_depth(
    solution: *const AdadepthSolution,
    out: *mut f64,
    len: usize,
) -> AdadepthStatus {
    guard(|| {
        copy_grid(
            borrow(solution, "solution")?.solution.depth.grid(),
            out,
            len,
        )
    })
}

/// # Safety
/// `solution` must come from this library and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn adadepth_solution_metrics(
    solution: *const AdadepthSolution,
    out: *mut AdadepthMetrics,
) -> AdadepthStatus {
    guard(|| {
        let metrics = borrow(solution, "solution")?.metrics;
        *borrow_mut(out, "metrics")? = metrics.into();
        Ok(())
    })
}

/// Number of recorded solver steps.
///
/// # Safety
/// `solution` must come from this library and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn adadepth_solution_steps(
    solution: *const AdadepthSolution,
    out: *mut usize,
) -> AdadepthStatus {
    guard(|| {
        let steps = borrow(solution, "solution")?.solution.trace.len();
        *borrow_mut(out, "steps")? = steps;
        Ok(())
    })
}

/// # Safety
/// `solution` must be null or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn adadepth_solution_free(solution: *mut AdadepthSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Metrics of `pred` against `gt` (both `width * height`, row-major) over
/// the pixels where `gt` is positive.
///
/// # Safety
/// `pred` and `gt` must be valid for `width * height` reads and `out` for writes.
#[no_mangle]
pub unsafe extern "C" fn adadepth_evaluate(
    pred: *const f64,
    gt: *const f64,
    width: usize,
    height: usize,
    out: *mut AdadepthMetrics,
) -> AdadepthStatus {
    guard(|| {
        if pred.is_null() || gt.is_null() {
            return Err(fail(AdadepthStatus::NullPointer, "depth buffer is null"));
        }
        let n = width
            .checked_mul(height)
            .ok_or_else(|| fail(AdadepthStatus::InvalidGrid, "grid size overflows"))?;
        let pred = std::slice::from_raw_parts(pred, n);
        let gt = std::slice::from_raw_parts(gt, n);
        let mask = lift(Mask::new(
            width,
            height,
            gt.iter().map(|&z| z > 0.0).collect(),
        ))?;
        let fill = |v: &[f64]| {
            let vals = v
                .iter()
                .zip(mask.bits())
                .map(|(&z, &m)| if m { z } else { 1.0 })
                .collect();
            lift(ScalarGrid::new(width, height, vals).and_then(DepthMap::new))
        };
        let report = lift(evaluate(&fill(pred)?, &fill(gt)?, &mask))?;
        *borrow_mut(out, "metrics")? = report.into();
        Ok(())
    })
}

/// Soft visibility weight of a standardized residual `rho` given the mean
/// residual `mu` of its frame.
#[no_mangle]
pub extern "C" fn adadepth_visibility_weight(rho: f64, mu: f64, a0: f64, b0: f64, eps: f64) -> f64 {
    let cfg = AlphaConfig { a0, b0, eps };
    flipped_sigmoid(rho, steepness(mu, &cfg), shift(mu, &cfg))
}
