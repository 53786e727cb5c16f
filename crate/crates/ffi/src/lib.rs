//! C ABI for the medestim estimators.
//!
//! Datasets and nuisance specifications are opaque handles created by
//! `med_*_new` functions and released with the matching `med_*_free`. Every
//! fallible function returns a [`MedStatus`]; on failure the message is
//! available from [`med_last_error`] on the same thread. Panics are caught
//! at the boundary and reported as `MED_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use medestim::nuisance::{ModelFamily, NuisanceSpec};
use medestim::simulation;
use medestim::{bootstrap_ci, estimators, Dataset, EffectEstimates, Error, EstimatorId, MediatorKind};

use nalgebra::DMatrix;

pub const MED_ESTIMATOR_COEFFICIENT_PRODUCT: u32 = 0;
pub const MED_ESTIMATOR_G_COMPUTATION: u32 = 1;
pub const MED_ESTIMATOR_IPW: u32 = 2;
pub const MED_ESTIMATOR_MULTIPLY_ROBUST: u32 = 3;
pub const MED_ESTIMATOR_DML: u32 = 4;

pub const MED_FAMILY_LINEAR: u32 = 0;
pub const MED_FAMILY_LINEAR_RIDGE_CV: u32 = 1;
pub const MED_FAMILY_FOREST: u32 = 2;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MedStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Invalid configuration or unsupported combination.
    Config = 3,
    /// Malformed or degenerate data.
    Data = 4,
    Panic = 5,
}

/// The five effects, in the order total, θ(1), θ(0), δ(1), δ(0).
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MedEffects {
    pub total: f64,
    pub direct_1: f64,
    pub direct_0: f64,
    pub indirect_1: f64,
    pub indirect_0: f64,
}

impl From<EffectEstimates> for MedEffects {
    fn from(e: EffectEstimates) -> Self {
        MedEffects {
            total: e.total,
            direct_1: e.direct_1,
            direct_0: e.direct_0,
            indirect_1: e.indirect_1,
            indirect_0: e.indirect_0,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MedBootstrap {
    pub point: MedEffects,
    pub ci_low: MedEffects,
    pub ci_high: MedEffects,
    /// Replicates dropped as degenerate.
    pub n_failed: usize,
}

/// Opaque dataset handle.
pub struct MedDataset(Dataset);

/// Opaque nuisance specification handle.
pub struct MedSpec(NuisanceSpec);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: MedStatus, message: impl Into<String>) -> MedStatus {
    set_last_error(message.into());
    status
}

fn status_of(e: &Error) -> MedStatus {
    if e.exit_code() == 1 {
        MedStatus::Config
    } else {
        MedStatus::Data
    }
}

/// Runs `f`, converting library errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), MedStatus>) -> MedStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MedStatus::Ok,
        Ok(Err(s)) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(MedStatus::Panic, format!("panic: {msg}"))
        }
    }
}

fn lib<T>(r: medestim::Result<T>) -> Result<T, MedStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), MedStatus> {
    if p.is_null() {
        Err(fail(MedStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

fn estimator(id: u32) -> Result<EstimatorId, MedStatus> {
    Ok(match id {
        MED_ESTIMATOR_COEFFICIENT_PRODUCT => EstimatorId::CoefficientProduct,
        MED_ESTIMATOR_G_COMPUTATION => EstimatorId::GComputation,
        MED_ESTIMATOR_IPW => EstimatorId::Ipw,
        MED_ESTIMATOR_MULTIPLY_ROBUST => EstimatorId::MultiplyRobust,
        MED_ESTIMATOR_DML => EstimatorId::Dml,
        _ => return Err(fail(MedStatus::InvalidArgument, format!("unknown estimator {id}"))),
    })
}

/// Copies row-major arrays into a new dataset. `x` is `n × dim_x`, `m` is
/// `n × dim_m`, `t` and `y` have length `n`. A nonzero `binary_mediator`
/// requires `dim_m == 1`.
///
/// # Safety
/// Each array must be valid for reads of the stated number of `f64`s and
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn med_dataset_new(
    x: *const f64,
    t: *const f64,
    m: *const f64,
    y: *const f64,
    n: usize,
    dim_x: usize,
    dim_m: usize,
    binary_mediator: bool,
    out: *mut *mut MedDataset,
) -> MedStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        for (p, name) in [(x, "x"), (t, "t"), (m, "m"), (y, "y")] {
            non_null(p, name)?;
        }
        if n == 0 || dim_x == 0 || dim_m == 0 {
            return Err(fail(MedStatus::InvalidArgument, "n, dim_x and dim_m must be positive"));
        }
        let kind = if binary_mediator {
            if dim_m != 1 {
                return Err(fail(MedStatus::InvalidArgument, "binary mediator must be one column"));
            }
            MediatorKind::Binary1D
        } else {
            MediatorKind::continuous(dim_m)
        };
        let xs = std::slice::from_raw_parts(x, n * dim_x);
        let ms = std::slice::from_raw_parts(m, n * dim_m);
        let ds = lib(Dataset::new(
            DMatrix::from_row_slice(n, dim_x, xs),
            std::slice::from_raw_parts(t, n).to_vec(),
            DMatrix::from_row_slice(n, dim_m, ms),
            std::slice::from_raw_parts(y, n).to_vec(),
            kind,
        ))?;
        lib(ds.validate())?;
        *out = Box::into_raw(Box::new(MedDataset(ds)));
        Ok(())
    })
}

/// Generates `n` rows of canonical simulation setting `setting` (1 to 36).
///
/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn med_dataset_simulate(
    setting: u32,
    n: usize,
    seed: u64,
    out: *mut *mut MedDataset,
) -> MedStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let s = lib(simulation::make_setting(setting, n))?;
        let ds = lib(simulation::generate_dataset(&s, seed))?;
        *out = Box::into_raw(Box::new(MedDataset(ds)));
        Ok(())
    })
}

/// Number of rows, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn med_dataset_rows(ds: *const MedDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.n())
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn med_dataset_free(ds: *mut MedDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Creates a nuisance specification with default settings for `family`,
/// `crossfit_folds` folds (0 disables cross-fitting) and `seed`.
///
/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn med_spec_new(
    family: u32,
    crossfit_folds: usize,
    calibrate: bool,
    seed: u64,
    out: *mut *mut MedSpec,
) -> MedStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let family = match family {
            MED_FAMILY_LINEAR => ModelFamily::LinearUnregularized,
            MED_FAMILY_LINEAR_RIDGE_CV => ModelFamily::LinearRidgeCv,
            MED_FAMILY_FOREST => ModelFamily::Forest,
            _ => return Err(fail(MedStatus::InvalidArgument, format!("unknown family {family}"))),
        };
        let spec = NuisanceSpec {
            crossfit_folds,
            calibrate,
            seed,
            ..NuisanceSpec::with_family(family)
        };
        lib(spec.validate())?;
        *out = Box::into_raw(Box::new(MedSpec(spec)));
        Ok(())
    })
}

/// # Safety
/// `spec` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn med_spec_free(spec: *mut MedSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Point estimates of all five effects. A null `spec` means the default
/// unregularized linear specification.
///
/// # Safety
/// `ds` must be a live handle, `spec` null or a live handle, and `out`
/// valid for one write.
#[no_mangle]
pub unsafe extern "C" fn med_estimate(
    estimator_id: u32,
    ds: *const MedDataset,
    spec: *const MedSpec,
    out: *mut MedEffects,
) -> MedStatus {
    guard(|| {
        non_null(ds, "ds")?;
        non_null(out, "out")?;
        let id = estimator(estimator_id)?;
        let default = NuisanceSpec::default();
        let spec = spec.as_ref().map_or(&default, |s| &s.0);
        let e = lib(estimators::run(id, &(*ds).0, spec))?;
        *out = e.into();
        Ok(())
    })
}

/// Percentile bootstrap with `b` replicates.
///
/// # Safety
/// As for [`med_estimate`].
#[no_mangle]
pub unsafe extern "C" fn med_bootstrap(
    estimator_id: u32,
    ds: *const MedDataset,
    spec: *const MedSpec,
    b: usize,
    seed: u64,
    out: *mut MedBootstrap,
) -> MedStatus {
    guard(|| {
        non_null(ds, "ds")?;
        non_null(out, "out")?;
        let id = estimator(estimator_id)?;
        let default = NuisanceSpec::default();
        let spec = spec.as_ref().map_or(&default, |s| &s.0);
        let r = lib(bootstrap_ci(id, &(*ds).0, spec, b, seed))?;
        *out = MedBootstrap {
            point: r.point.into(),
            ci_low: r.ci_low.into(),
            ci_high: r.ci_high.into(),
            n_failed: r.n_failed,
        };
        Ok(())
    })
}

/// Monte-Carlo true effects of a canonical setting; `std_error` may be null.
///
/// # Safety
/// `out` must be valid for one write; `std_error` null or valid for one
/// write.
#[no_mangle]
pub unsafe extern "C" fn med_true_effects(
    setting: u32,
    mc_samples: usize,
    seed: u64,
    out: *mut MedEffects,
    std_error: *mut MedEffects,
) -> MedStatus {
    guard(|| {
        non_null(out, "out")?;
        let s = lib(simulation::make_setting(setting, 500))?;
        let te = lib(simulation::true_effects(&s, mc_samples, seed))?;
        *out = te.effects.into();
        if let Some(se) = std_error.as_mut() {
            *se = te.std_error.into();
        }
        Ok(())
    })
}

/// Message of the last failure on this thread as a new string to release
/// with [`med_string_free`], or null if there was none.
#[no_mangle]
pub extern "C" fn med_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().clone().map_or(ptr::null_mut(), CString::into_raw))
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn med_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn med_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
