//! C interface: staged workspace runs, surrogate evaluation and rectified
//! prediction behind opaque handles. Every call returns an `MreStatus`;
//! `mre_last_error` holds the message of the most recent failure on the
//! calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use nalgebra::{DMatrix, DVector};

use mre_core::config::ExperimentConfig;
use mre_core::modal::{BasisArtifact, ModalBasis};
use mre_core::pipeline::io::read_json;
use mre_core::pipeline::{Stage, Workspace};
use mre_core::rectify::RectifiedModel;
use mre_core::surrogate::{Surrogate, SurrogateArtifact};
use mre_core::Error;

/// Matches the exit codes of the `mre` binary where they overlap.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MreStatus {
    Ok = 0,
    Failure = 1,
    Config = 2,
    Numerical = 3,
    PipelineOrder = 4,
    InvalidArgument = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MreStage {
    Simulate = 0,
    Infer = 1,
    TrainSurrogate = 2,
    Predict = 3,
    Report = 4,
}

/// Opaque.
pub struct MreWorkspace {
    inner: Workspace,
}

/// Opaque.
pub struct MreSurrogate {
    inner: Surrogate,
}

/// Opaque.
pub struct MreRectified {
    inner: RectifiedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MreStatus {
    match e.exit_code() {
        2 => MreStatus::Config,
        3 => MreStatus::Numerical,
        4 => MreStatus::PipelineOrder,
        _ => MreStatus::Failure,
    }
}

fn bad(msg: &str) -> Failure {
    Failure(MreStatus::InvalidArgument, msg.to_string())
}

struct Failure(MreStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MreStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MreStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            MreStatus::Panic
        }
    }
}

/// # Safety
/// `s` is NULL or a NUL-terminated string valid for the call.
unsafe fn path_arg(s: *const c_char, what: &str) -> Result<Option<PathBuf>, Failure> {
    if s.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(s)
        .to_str()
        .map(|v| Some(PathBuf::from(v)))
        .map_err(|_| bad(&format!("{what} is not valid UTF-8")))
}

/// Message of the last failure on this thread, or NULL. Valid until the
/// next failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn mre_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Opens an artifact directory for `config_path`. `out_dir` may be NULL to
/// use the directory named by the config; `seed` overrides the config seed
/// when `has_seed` is true.
///
/// # Safety
/// String arguments are NULL or NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mre_workspace_open(
    config_path: *const c_char,
    out_dir: *const c_char,
    has_seed: bool,
    seed: u64,
    out: *mut *mut MreWorkspace,
) -> MreStatus {
    guard(|| {
        if out.is_null() {
            return Err(bad("out is NULL"));
        }
        let cfg = path_arg(config_path, "config_path")?.ok_or_else(|| bad("config_path is NULL"))?;
        let dir = path_arg(out_dir, "out_dir")?;
        let config = ExperimentConfig::load(&cfg)?;
        let ws = Workspace::new(config, dir, has_seed.then_some(seed))?;
        *out = Box::into_raw(Box::new(MreWorkspace { inner: ws }));
        Ok(())
    })
}

/// Runs one stage. `basis_path` (NULL for none) is the alternate mesh for
/// `Predict`.
///
/// # Safety
/// `ws` comes from `mre_workspace_open`; `basis_path` is NULL or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mre_workspace_run(
    ws: *const MreWorkspace,
    stage: MreStage,
    basis_path: *const c_char,
) -> MreStatus {
    guard(|| {
        let ws = ws.as_ref().ok_or_else(|| bad("workspace is NULL"))?;
        let basis = path_arg(basis_path, "basis_path")?;
        let stage = match stage {
            MreStage::Simulate => Stage::Simulate,
            MreStage::Infer => Stage::Infer,
            MreStage::TrainSurrogate => Stage::TrainSurrogate,
            MreStage::Predict => Stage::Predict,
            MreStage::Report => Stage::Report,
        };
        ws.inner.run(stage, basis.as_deref())?;
        Ok(())
    })
}

/// # Safety
/// `ws` is NULL or comes from `mre_workspace_open` and is not used again.
#[no_mangle]
pub unsafe extern "C" fn mre_workspace_free(ws: *mut MreWorkspace) {
    if !ws.is_null() {
        drop(Box::from_raw(ws));
    }
}

/// Loads a `surrogate.json` artifact.
///
/// # Safety
/// `path` is NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mre_surrogate_load(path: *const c_char, out: *mut *mut MreSurrogate) -> MreStatus {
    guard(|| {
        if out.is_null() {
            return Err(bad("out is NULL"));
        }
        let p = path_arg(path, "path")?.ok_or_else(|| bad("path is NULL"))?;
        let art: SurrogateArtifact = read_json(&p)?;
        *out = Box::into_raw(Box::new(MreSurrogate {
            inner: art.to_surrogate()?,
        }));
        Ok(())
    })
}

/// Number of modes `m`, 0 for NULL.
///
/// # Safety
/// `s` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mre_surrogate_modes(s: *const MreSurrogate) -> usize {
    s.as_ref().map_or(0, |s| s.inner.modes())
}

/// `eta[m] = surrogate(q[m], q_dot[m])`.
///
/// # Safety
/// `s` is a live handle; each array holds `m` doubles.
#[no_mangle]
pub unsafe extern "C" fn mre_surrogate_evaluate(
    s: *const MreSurrogate,
    q: *const f64,
    q_dot: *const f64,
    m: usize,
    eta: *mut f64,
) -> MreStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| bad("surrogate is NULL"))?;
        if q.is_null() || q_dot.is_null() || eta.is_null() {
            return Err(bad("array argument is NULL"));
        }
        if m != s.inner.modes() {
            return Err(bad(&format!("surrogate has {} modes, got {m}", s.inner.modes())));
        }
        let q = std::slice::from_raw_parts(q, m);
        let qd = std::slice::from_raw_parts(q_dot, m);
        let x = DVector::from_iterator(2 * m, q.iter().chain(qd).copied());
        let y = s.inner.evaluate(&x);
        std::slice::from_raw_parts_mut(eta, m).copy_from_slice(y.as_slice());
        Ok(())
    })
}

/// # Safety
/// `s` is NULL or comes from `mre_surrogate_load` and is not used again.
#[no_mangle]
pub unsafe extern "C" fn mre_surrogate_free(s: *mut MreSurrogate) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

fn load_basis(p: &Path) -> Result<ModalBasis, Failure> {
    let art: BasisArtifact = read_json(p)?;
    Ok(art.to_basis()?)
}

/// Nominal modal model from a `basis.json` artifact with the surrogate in
/// the loop. The surrogate is copied; its handle stays owned by the caller.
///
/// # Safety
/// `basis_path` is NUL-terminated; `s` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mre_rectified_new(
    basis_path: *const c_char,
    s: *const MreSurrogate,
    out: *mut *mut MreRectified,
) -> MreStatus {
    guard(|| {
        if out.is_null() {
            return Err(bad("out is NULL"));
        }
        let s = s.as_ref().ok_or_else(|| bad("surrogate is NULL"))?;
        let p = path_arg(basis_path, "basis_path")?.ok_or_else(|| bad("basis_path is NULL"))?;
        let basis = load_basis(&p)?;
        *out = Box::into_raw(Box::new(MreRectified {
            inner: RectifiedModel::new(&basis, s.inner.clone())?,
        }));
        Ok(())
    })
}

/// Integrates from rest under the modal load `p` (`m x steps`, column
/// major: sample `k` occupies `p[k*m .. k*m + m]`). Writes `q` in the same
/// layout and, when `extrapolation` is not NULL, the share of samples
/// outside the training range.
///
/// # Safety
/// `r` is a live handle; `p` and `q` hold `m * steps` doubles.
#[no_mangle]
pub unsafe extern "C" fn mre_rectified_predict(
    r: *const MreRectified,
    p: *const f64,
    m: usize,
    steps: usize,
    dt: f64,
    substeps: usize,
    q: *mut f64,
    extrapolation: *mut f64,
) -> MreStatus {
    guard(|| {
        let r = r.as_ref().ok_or_else(|| bad("model is NULL"))?;
        if p.is_null() || q.is_null() {
            return Err(bad("array argument is NULL"));
        }
        if m != r.inner.modes() || steps == 0 {
            return Err(bad(&format!("model has {} modes, got {m} x {steps}", r.inner.modes())));
        }
        let load = DMatrix::from_column_slice(m, steps, std::slice::from_raw_parts(p, m * steps));
        let pred = r.inner.predict(&load, dt, substeps)?;
        std::slice::from_raw_parts_mut(q, m * steps).copy_from_slice(pred.q.as_slice());
        if !extrapolation.is_null() {
            *extrapolation = pred.extrapolation_fraction;
        }
        Ok(())
    })
}

/// # Safety
/// `r` is NULL or comes from `mre_rectified_new` and is not used again.
#[no_mangle]
pub unsafe extern "C" fn mre_rectified_free(r: *mut MreRectified) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}
