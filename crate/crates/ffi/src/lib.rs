//! C ABI over the kolmo library.
//!
//! Every entry point returns a [`KolmoStatus`] code. On failure the message
//! is kept per thread and can be copied out with [`kolmo_last_error`].
//! Matrices cross the boundary row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use kolmo::control::{optimal_cost, CostConvention};
use kolmo::harnack::{chain_to_target, HarnackParams};
use kolmo::kernel::gamma;
use kolmo::sde::{sample_exact, LinearSde};
use kolmo::structure::check_all;
use kolmo::{validate_operator, AxisBox, BoxDomain, GroupPoint, KolmoError, OperatorSpec, RawOperator};
use nalgebra::{DMatrix, DVector};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KolmoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    InvalidOperator = 3,
    NotControllable = 4,
    OutsideDomain = 5,
    NotAttainable = 6,
    Numerical = 7,
    Panic = 8,
}

/// Opaque validated operator.
pub struct KolmoOperator {
    spec: OperatorSpec,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct KolmoConditions {
    pub c1: bool,
    pub c2: bool,
    pub c3: bool,
    pub c4: bool,
    pub c5: bool,
    pub consistent: bool,
    pub bracket_dimension: usize,
    pub kalman_rank: usize,
    pub min_eigenvalue: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KolmoCost {
    Controllability = 0,
    Gramian = 1,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Failure(KolmoStatus, String);

impl From<KolmoError> for Failure {
    fn from(e: KolmoError) -> Self {
        use KolmoError::*;
        let status = match &e {
            DimensionMismatch(_) | NonPositiveRadius(_) | NonPositiveTime(_) | ZeroPoint | ZeroNormal
            | PoleEvaluation | BadTimeOrder(_) | BadSampleCount(_) | BadStep(_) | EmptyControl
            | InvalidParameter(_) => KolmoStatus::InvalidInput,
            NotSymmetric(_) | A0NotPositive(_) | BlockRankDeficient(_) | InvalidStrata(_) | SigmaMismatch(_) => {
                KolmoStatus::InvalidOperator
            }
            NotControllable { .. } => KolmoStatus::NotControllable,
            PointOutsideDomain | PointOnBoundary | PoleInsideDomain => KolmoStatus::OutsideDomain,
            CurveExitsDomain(_) | EnergyWindowUnsatisfiable | TargetNotAttainable(_) => KolmoStatus::NotAttainable,
            NonFinite | GramianSingular(_) | DegenerateSample(_) | QuadratureMismatch(_) => KolmoStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

fn input(msg: impl Into<String>) -> Failure {
    Failure(KolmoStatus::InvalidInput, msg.into())
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> KolmoStatus {
    let (status, msg) = match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => (KolmoStatus::Ok, String::new()),
        Ok(Err(Failure(s, m))) => (s, m),
        Err(_) => (KolmoStatus::Panic, "internal panic".to_string()),
    };
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
    status
}

unsafe fn read<'a, T>(ptr: *const T, len: usize) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure(KolmoStatus::NullPointer, "null input array".into()));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn write<'a, T>(ptr: *mut T, len: usize) -> Result<&'a mut [T], Failure> {
    if ptr.is_null() {
        return Err(Failure(KolmoStatus::NullPointer, "null output buffer".into()));
    }
    Ok(slice::from_raw_parts_mut(ptr, len))
}

unsafe fn out<'a, T>(ptr: *mut T) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or_else(|| Failure(KolmoStatus::NullPointer, "null output pointer".into()))
}

unsafe fn operator<'a>(op: *const KolmoOperator) -> Result<&'a OperatorSpec, Failure> {
    op.as_ref().map(|o| &o.spec).ok_or_else(|| Failure(KolmoStatus::NullPointer, "null operator handle".into()))
}

unsafe fn raw_from_parts(
    n: usize,
    a: *const f64,
    b: *const f64,
    strata: *const usize,
    n_strata: usize,
) -> Result<RawOperator, Failure> {
    if n == 0 {
        return Err(input("dimension must be positive"));
    }
    let a = DMatrix::from_row_slice(n, n, read(a, n * n)?);
    let b = DMatrix::from_row_slice(n, n, read(b, n * n)?);
    Ok(RawOperator::new(a, b, read(strata, n_strata)?.to_vec()))
}

unsafe fn json_raw(text: *const c_char) -> Result<RawOperator, Failure> {
    if text.is_null() {
        return Err(Failure(KolmoStatus::NullPointer, "null JSON string".into()));
    }
    let text = CStr::from_ptr(text).to_str().map_err(|_| input("JSON is not UTF-8"))?;
    RawOperator::from_json(text).map_err(input)
}

unsafe fn point(spec: &OperatorSpec, x: *const f64, t: f64) -> Result<GroupPoint, Failure> {
    Ok(GroupPoint::new(DVector::from_column_slice(read(x, spec.dim())?), t))
}

fn boxed(spec: OperatorSpec, handle: *mut *mut KolmoOperator) -> Result<(), Failure> {
    let slot = unsafe { out(handle)? };
    *slot = Box::into_raw(Box::new(KolmoOperator { spec }));
    Ok(())
}

/// Validates an operator given as `n × n` row-major `a` and `b` plus the
/// stratum sizes, and stores a new handle in `*handle`.
///
/// # Safety
/// `a` and `b` must point to `n*n` doubles, `strata` to `n_strata` sizes.
#[no_mangle]
pub unsafe extern "C" fn kolmo_operator_new(
    n: usize,
    a: *const f64,
    b: *const f64,
    strata: *const usize,
    n_strata: usize,
    handle: *mut *mut KolmoOperator,
) -> KolmoStatus {
    guard(|| boxed(validate_operator(&raw_from_parts(n, a, b, strata, n_strata)?)?, handle))
}

/// Same as [`kolmo_operator_new`] from the JSON operator format.
///
/// # Safety
/// `json` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn kolmo_operator_from_json(json: *const c_char, handle: *mut *mut KolmoOperator) -> KolmoStatus {
    guard(|| boxed(validate_operator(&json_raw(json)?)?, handle))
}

/// # Safety
/// `op` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn kolmo_operator_free(op: *mut KolmoOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Spatial dimension N, or 0 for a null handle.
///
/// # Safety
/// `op` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kolmo_operator_dim(op: *const KolmoOperator) -> usize {
    op.as_ref().map_or(0, |o| o.spec.dim())
}

/// Sum of the spatial dilation exponents, or 0 for a null handle.
///
/// # Safety
/// `op` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kolmo_operator_homogeneous_dim(op: *const KolmoOperator) -> usize {
    op.as_ref().map_or(0, |o| o.spec.dilations().homogeneous_dim as usize)
}

/// Structural conditions of an unvalidated operator. Degenerate operators
/// are reported, not rejected.
///
/// # Safety
/// See [`kolmo_operator_new`]; `report` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kolmo_classify(
    n: usize,
    a: *const f64,
    b: *const f64,
    strata: *const usize,
    n_strata: usize,
    report: *mut KolmoConditions,
) -> KolmoStatus {
    guard(|| {
        let rep = check_all(&raw_from_parts(n, a, b, strata, n_strata)?);
        *out(report)? = KolmoConditions {
            c1: rep.c1,
            c2: rep.c2,
            c3: rep.c3,
            c4: rep.c4,
            c5: rep.c5,
            consistent: rep.consistent,
            bracket_dimension: rep.bracket_dimension,
            kalman_rank: rep.kalman_rank,
            min_eigenvalue: rep.min_eigenvalue,
        };
        Ok(())
    })
}

/// Fundamental solution Γ(z; ζ). Both `value` and `log_value` are written;
/// either may be null.
///
/// # Safety
/// `x` and `xi` must point to N doubles.
#[no_mangle]
pub unsafe extern "C" fn kolmo_gamma(
    op: *const KolmoOperator,
    x: *const f64,
    t: f64,
    xi: *const f64,
    tau: f64,
    value: *mut f64,
    log_value: *mut f64,
) -> KolmoStatus {
    guard(|| {
        let spec = operator(op)?;
        let k = gamma(spec, &point(spec, x, t)?, &point(spec, xi, tau)?)?;
        if let Some(v) = value.as_mut() {
            *v = k.value;
        }
        if let Some(v) = log_value.as_mut() {
            *v = k.log_value;
        }
        Ok(())
    })
}

/// `n` exact samples of the associated SDE at time `t` from `x0`, written
/// row-major into `samples` (room for `n*N` doubles).
///
/// # Safety
/// `x0` must point to N doubles, `samples` to `n*N`.
#[no_mangle]
pub unsafe extern "C" fn kolmo_sample_exact(
    op: *const KolmoOperator,
    x0: *const f64,
    t: f64,
    n: usize,
    seed: u64,
    samples: *mut f64,
) -> KolmoStatus {
    guard(|| {
        let spec = operator(op)?;
        let dim = spec.dim();
        let x0 = DVector::from_column_slice(read(x0, dim)?);
        let buf = write(samples, n * dim)?;
        let batch = sample_exact(&LinearSde::from(spec), &x0, t, n, seed)?;
        for (i, row) in batch.points.row_iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                buf[i * dim + j] = *v;
            }
        }
        Ok(())
    })
}

/// Minimal control cost from `x0` to `x1` over horizon `tau`.
///
/// # Safety
/// `x0` and `x1` must point to N doubles.
#[no_mangle]
pub unsafe extern "C" fn kolmo_optimal_cost(
    op: *const KolmoOperator,
    x0: *const f64,
    x1: *const f64,
    tau: f64,
    convention: KolmoCost,
    cost: *mut f64,
) -> KolmoStatus {
    guard(|| {
        let spec = operator(op)?;
        let dim = spec.dim();
        let convention = match convention {
            KolmoCost::Controllability => CostConvention::Controllability,
            KolmoCost::Gramian => CostConvention::Gramian,
        };
        let c = optimal_cost(
            spec,
            &DVector::from_column_slice(read(x0, dim)?),
            &DVector::from_column_slice(read(x1, dim)?),
            tau,
            convention,
        )?;
        *out(cost)? = c;
        Ok(())
    })
}

/// Harnack chain bound u(target) ≤ c^k u(z0) inside the box `lo`/`hi`
/// (N+1 coordinates each, time last) with the default constants. Writes the
/// chain length and the bound.
///
/// # Safety
/// Points hold N doubles, `lo` and `hi` N+1.
#[no_mangle]
pub unsafe extern "C" fn kolmo_harnack_bound(
    op: *const KolmoOperator,
    x0: *const f64,
    t0: f64,
    x: *const f64,
    t: f64,
    lo: *const f64,
    hi: *const f64,
    links: *mut usize,
    bound: *mut f64,
) -> KolmoStatus {
    guard(|| {
        let spec = operator(op)?;
        let dim = spec.dim();
        let domain = BoxDomain::single(AxisBox::new(read(lo, dim + 1)?.to_vec(), read(hi, dim + 1)?.to_vec())?);
        let chain =
            chain_to_target(spec, &point(spec, x0, t0)?, &point(spec, x, t)?, &domain, &HarnackParams::default(), 128)?;
        let (k, b) = chain.map_or((0, 1.0), |c| (c.k, c.bound));
        *out(links)? = k;
        *out(bound)? = b;
        Ok(())
    })
}

/// Copies the calling thread's last error message, NUL-terminated and
/// truncated to `len`. Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn kolmo_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            let dst = slice::from_raw_parts_mut(buf as *mut u8, n + 1);
            dst[..n].copy_from_slice(&msg.as_bytes()[..n]);
            dst[n] = 0;
        }
        msg.len()
    })
}
