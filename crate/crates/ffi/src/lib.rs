//! C interface to `pntkit`.
//!
//! Every call returns a [`PntStatus`]. On failure the message is available
//! from [`pntkit_last_error`] until the next call on the same thread.
//! Strings handed out by the library are released with
//! [`pntkit_string_free`], models with [`pntkit_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pntkit::geometry::{holonomy_dimension, sample_points, BlockRef, TowerOptions};
use pntkit::holonomy::{holonomy_ordered_exp, holonomy_projector_transport, HolonomyOptions, ParameterLoop};
use pntkit::models::{builtin, hamiltonian_at, parse_model, ModelSpec};
use pntkit::pnt::{pnt_scan, ScanConfig};
use pntkit::spectral::{basis_for, default_cluster_tol, eigen_blocks, local_frame, BlockSelector, Gauge};
use pntkit::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PntStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Parse = 4,
    Model = 5,
    UnboundParameter = 6,
    ModeIndex = 7,
    NotHermitian = 8,
    FrameDegeneracy = 9,
    StepSize = 10,
    Truncation = 11,
    Numerical = 12,
    BufferTooSmall = 13,
    Panic = 14,
}

/// Holonomy integration method.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PntMethod {
    OrderedExponential = 0,
    ProjectorTransport = 1,
}

/// Opaque model handle.
pub struct PntModel {
    spec: ModelSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PntStatus {
    match e {
        Error::Config(_) => PntStatus::Config,
        Error::Parse { .. } => PntStatus::Parse,
        Error::Model(_) => PntStatus::Model,
        Error::UnboundParameter(_) => PntStatus::UnboundParameter,
        Error::ModeIndex { .. } => PntStatus::ModeIndex,
        Error::NotHermitian(_) => PntStatus::NotHermitian,
        Error::FrameDegeneracy(_) => PntStatus::FrameDegeneracy,
        Error::StepSize(_) => PntStatus::StepSize,
        Error::Truncation(_) => PntStatus::Truncation,
        Error::Numerical(_) => PntStatus::Numerical,
    }
}

enum Fail {
    Status(PntStatus, String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PntStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PntStatus::Ok,
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Status(s, m))) => {
            set_error(m);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            PntStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Status(PntStatus::NullPointer, "null string".into()));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Status(PntStatus::InvalidUtf8, "string is not UTF-8".into()))
}

unsafe fn model<'a>(m: *const PntModel) -> Result<&'a PntModel, Fail> {
    m.as_ref().ok_or_else(|| Fail::Status(PntStatus::NullPointer, "null model".into()))
}

fn null(what: &str) -> Fail {
    Fail::Status(PntStatus::NullPointer, format!("null {what}"))
}

fn layer_of(layer: i32) -> Option<u32> {
    u32::try_from(layer).ok()
}

/// Message of the last failed call on this thread, or null.
/// The pointer stays valid until the next call.
#[no_mangle]
pub extern "C" fn pntkit_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pntkit_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Load a builtin model by name.
///
/// # Safety
/// `name` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pntkit_model_builtin(name: *const c_char, out: *mut *mut PntModel) -> PntStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("output"));
        }
        let spec = builtin(text(name)?)?;
        *out = Box::into_raw(Box::new(PntModel { spec }));
        Ok(())
    })
}

/// Parse a model document.
///
/// # Safety
/// `doc` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pntkit_model_parse(doc: *const c_char, out: *mut *mut PntModel) -> PntStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("output"));
        }
        let spec = parse_model(text(doc)?)?;
        *out = Box::into_raw(Box::new(PntModel { spec }));
        Ok(())
    })
}

/// # Safety
/// `m` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pntkit_model_free(m: *mut PntModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of model parameters.
///
/// # Safety
/// `m` must be a live model handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pntkit_model_param_count(m: *const PntModel, out: *mut usize) -> PntStatus {
    guard(|| {
        let m = model(m)?;
        *out.as_mut().ok_or_else(|| null("output"))? = m.spec.params.len();
        Ok(())
    })
}

/// Particle-number threshold scan up to `n_max` particles with covariant
/// derivatives to order `k_max`. When `report_json` is non-null it receives
/// the full report, to be released with [`pntkit_string_free`].
///
/// # Safety
/// Pointers must be valid; `report_json` may be null.
#[no_mangle]
pub unsafe extern "C" fn pntkit_pnt_scan(m: *const PntModel, n_max: u32, k_max: u32, seed: u64, n_t: *mut u32, report_json: *mut *mut c_char) -> PntStatus {
    guard(|| {
        let m = model(m)?;
        let out = n_t.as_mut().ok_or_else(|| null("output"))?;
        let cfg = ScanConfig { n_max, k_max: k_max as usize, seed, ..Default::default() };
        let r = pnt_scan(&m.spec, &cfg)?;
        *out = r.n_t;
        if !report_json.is_null() {
            let s = serde_json::to_string(&r).expect("report serializes");
            *report_json = CString::new(s).expect("no nul").into_raw();
        }
        Ok(())
    })
}

/// Rank of the curvature tower of one eigenspace, maximized over the base
/// point and `samples` random points. `layer < 0` selects the truncated
/// basis.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pntkit_holonomy_dimension(
    m: *const PntModel,
    layer: i32,
    eigenvalue: f64,
    k_max: u32,
    samples: u32,
    seed: u64,
    rank_tol: f64,
    rank: *mut usize,
    dim_f: *mut usize,
) -> PntStatus {
    guard(|| {
        let m = model(m)?;
        let (rank, dim_f) = (rank.as_mut().ok_or_else(|| null("output"))?, dim_f.as_mut().ok_or_else(|| null("output"))?);
        let layer = layer_of(layer);
        let points = sample_points(&m.spec, seed, samples as usize);
        let first = points.first().ok_or_else(|| Fail::Status(PntStatus::Config, "no sample points".into()))?;
        let basis = basis_for(&m.spec, layer)?;
        let c = m.spec.compiled();
        let h = if c.isospectral() { pntkit::fock::operator_matrix(&c.h, &basis, first)? } else { hamiltonian_at(&m.spec, first, &basis)? };
        let b = eigen_blocks(&h, default_cluster_tol(&m.spec))?
            .into_iter()
            .find(|b| (b.eigenvalue - eigenvalue).abs() < 1e-6 * eigenvalue.abs().max(1.0))
            .ok_or_else(|| Fail::Status(PntStatus::Config, format!("no eigenvalue {eigenvalue}")))?;
        let blk = BlockRef { layer, spectral_index: b.spectral_index, dimension: b.dimension };
        let opts = TowerOptions { k_max: k_max as usize, ..Default::default() };
        let r = holonomy_dimension(&m.spec, &[blk], &points, &opts, rank_tol)?;
        *rank = r.rank;
        *dim_f = r.dim_f;
        Ok(())
    })
}

/// Holonomy of the eigenspace with `eigenvalue` around the loop document
/// `loop_doc`. The `d × d` unitary is written row-major into `re`/`im`
/// (capacity `cap` entries each) and `d` into `dim`.
///
/// # Safety
/// Pointers must be valid and the buffers hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn pntkit_holonomy_loop(
    m: *const PntModel,
    layer: i32,
    eigenvalue: f64,
    loop_doc: *const c_char,
    method: PntMethod,
    re: *mut f64,
    im: *mut f64,
    cap: usize,
    dim: *mut usize,
) -> PntStatus {
    guard(|| {
        let m = model(m)?;
        let dim = dim.as_mut().ok_or_else(|| null("output"))?;
        if re.is_null() || im.is_null() {
            return Err(null("buffer"));
        }
        let lp = ParameterLoop::parse(text(loop_doc)?)?;
        let layer = layer_of(layer);
        let gauge = if m.spec.compiled().isospectral() && m.spec.number_conserving() { Gauge::Isospectral } else { Gauge::ProjectorTransport };
        let field = local_frame(&m.spec, lp.base(), &BlockSelector { layer, eigenvalue }, gauge, default_cluster_tol(&m.spec))?;
        let opts = HolonomyOptions::default();
        let r = match method {
            PntMethod::OrderedExponential => holonomy_ordered_exp(&field, &lp, &opts)?,
            PntMethod::ProjectorTransport => holonomy_projector_transport(&field, &lp, &opts)?,
        };
        let d = r.unitary.nrows();
        *dim = d;
        if d * d > cap {
            return Err(Fail::Status(PntStatus::BufferTooSmall, format!("need {} entries", d * d)));
        }
        let (re, im) = (std::slice::from_raw_parts_mut(re, cap), std::slice::from_raw_parts_mut(im, cap));
        for i in 0..d {
            for j in 0..d {
                re[i * d + j] = r.unitary[(i, j)].re;
                im[i * d + j] = r.unitary[(i, j)].im;
            }
        }
        Ok(())
    })
}
