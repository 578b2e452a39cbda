//! The flow E(t) = exp(−tB), the Gramian C(t) and the explicit Gaussian
//! fundamental solution Γ.
//!
//! Convention: `gamma(spec, z, zeta)` treats `z` as the living point and
//! `zeta` as the pole. In the living variables Γ solves
//! Tr(A D²Γ) + ⟨Bx, DΓ⟩ − ∂_tΓ = 0, and as a function of the pole's
//! spatial variable it is a probability density.

mod cache;
pub mod checks;
pub mod quadrature;
pub mod superlevel;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

pub use cache::GramianCache;

use crate::error::{KolmoError, Result};
use crate::group::GroupPoint;
use crate::linalg;
use crate::operator::{scaled_b, OperatorSpec};

/// Relative smallest-eigenvalue threshold below which C(t) counts as singular.
const SINGULAR_REL_TOL: f64 = 1e-13;
/// Block-exponential vs quadrature agreement required by [`gramian`].
pub const GRAMIAN_CROSS_TOL: f64 = 1e-9;

pub fn matrix_exponential(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    linalg::expm(m)
}

/// E(t) = exp(−tB). Non-finite `t` yields a NaN matrix.
pub fn propagator(spec: &OperatorSpec, t: f64) -> DMatrix<f64> {
    let n = spec.dim();
    if t == 0.0 {
        return DMatrix::identity(n, n);
    }
    linalg::expm(&(spec.b() * -t)).unwrap_or_else(|_| DMatrix::from_element(n, n, f64::NAN))
}

/// E(t), C(t) and what Γ needs from them at one time value.
///
/// C(t) is stored through its unit-time representative: with r = √t,
/// C(t) = D₀(r) C_r D₀(r), where C_r is the time-one Gramian of the scaled
/// drift. This keeps det C(t) and C(t)⁻¹ accurate across scales.
#[derive(Debug, Clone, Serialize)]
pub struct GramianBundle {
    pub t: f64,
    pub e: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub c_inv: DMatrix<f64>,
    pub log_det_c: f64,
    /// Diagonal of D₀(√t).
    scale: DVector<f64>,
    /// Inverse of the unit-time representative.
    unit_inv: DMatrix<f64>,
}

impl GramianBundle {
    /// ⟨C(t)⁻¹w, w⟩.
    pub fn quad_form(&self, w: &DVector<f64>) -> f64 {
        let v = w.component_div(&self.scale);
        (&self.unit_inv * &v).dot(&v)
    }

    /// C(t)⁻¹w.
    pub fn solve(&self, w: &DVector<f64>) -> DVector<f64> {
        let v = w.component_div(&self.scale);
        (&self.unit_inv * v).component_div(&self.scale)
    }

    pub fn det_c(&self) -> f64 {
        self.log_det_c.exp()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.c)
    }
}

/// Time-one Gramian of the drift scaled to time `t`, and the scaled E(1).
fn unit_gramian(spec: &OperatorSpec, t: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let group = spec.dilations();
    let br = scaled_b(spec.b(), t.sqrt(), &group)?;
    linalg::exp_and_gramian(&(-br), spec.a(), 1.0)
}

fn bundle_from_unit(spec: &OperatorSpec, t: f64, unit: DMatrix<f64>) -> Result<GramianBundle> {
    let group = spec.dilations();
    let scale = DVector::from_iterator(spec.dim(), group.q.iter().map(|&q| t.powf(q as f64 / 2.0)));
    let eig = nalgebra::SymmetricEigen::new(unit.clone());
    let lmin = eig.eigenvalues.min();
    let lmax = eig.eigenvalues.max();
    if !(lmin > SINGULAR_REL_TOL * lmax.max(f64::MIN_POSITIVE)) {
        return Err(KolmoError::GramianSingular(lmin));
    }
    let unit_inv = linalg::symmetrize(
        &(&eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l)) * eig.eigenvectors.transpose()),
    );
    let log_det_unit: f64 = eig.eigenvalues.iter().map(|l| l.ln()).sum();
    let log_det_c = log_det_unit + group.homogeneous_dim as f64 * t.ln();
    let d = DMatrix::from_diagonal(&scale);
    let dinv = DMatrix::from_diagonal(&scale.map(|s| 1.0 / s));
    Ok(GramianBundle {
        t,
        e: propagator(spec, t),
        c: &d * &unit * &d,
        c_inv: &dinv * &unit_inv * &dinv,
        log_det_c,
        scale,
        unit_inv,
    })
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(KolmoError::NonPositiveTime(t));
    }
    Ok(())
}

/// Gramian from the block exponential alone. Used on hot paths.
pub fn gramian_fast(spec: &OperatorSpec, t: f64) -> Result<GramianBundle> {
    check_time(t)?;
    let (_, unit) = unit_gramian(spec, t)?;
    bundle_from_unit(spec, t, unit)
}

/// The time-one Gramian of the scaled drift by adaptive Simpson.
fn unit_gramian_by_quadrature(spec: &OperatorSpec, t: f64, tol: f64) -> Result<DMatrix<f64>> {
    let group = spec.dilations();
    let br = scaled_b(spec.b(), t.sqrt(), &group)?;
    let n = spec.dim();
    let a = spec.a().clone();
    let flat = quadrature::adaptive_simpson(
        |s| {
            let e = linalg::expm(&(&br * -s)).expect("finite scaled drift");
            let m = &e * &a * e.transpose();
            DVector::from_column_slice(m.as_slice())
        },
        0.0,
        1.0,
        tol,
    );
    Ok(linalg::symmetrize(&DMatrix::from_column_slice(n, n, flat.as_slice())))
}

/// C(t) by the block exponential, cross-checked against adaptive quadrature
/// of E(s)AE(s)ᵀ.
pub fn gramian(spec: &OperatorSpec, t: f64) -> Result<GramianBundle> {
    check_time(t)?;
    let (_, unit) = unit_gramian(spec, t)?;
    let quad = unit_gramian_by_quadrature(spec, t, quadrature::DEFAULT_SIMPSON_TOL * unit.amax())?;
    let rel = (&unit - &quad).norm() / unit.norm();
    if rel > GRAMIAN_CROSS_TOL {
        return Err(KolmoError::QuadratureMismatch(rel));
    }
    bundle_from_unit(spec, t, unit)
}

/// A kernel value kept in log space; `value` is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelValue {
    pub value: f64,
    pub log_value: f64,
}

impl KernelValue {
    pub fn zero() -> Self {
        Self { value: 0.0, log_value: f64::NEG_INFINITY }
    }

    pub fn from_log(log_value: f64) -> Self {
        Self { value: log_value.exp(), log_value }
    }
}

/// x − E(s)ξ for s = t − τ.
fn offset(bundle: &GramianBundle, z: &GroupPoint, zeta: &GroupPoint) -> DVector<f64> {
    &z.x - &bundle.e * &zeta.x
}

/// log Γ for a precomputed bundle at s = t − τ > 0.
pub fn log_gamma_with(spec: &OperatorSpec, bundle: &GramianBundle, z: &GroupPoint, zeta: &GroupPoint) -> f64 {
    let n = spec.dim() as f64;
    let w = offset(bundle, z, zeta);
    -0.5 * n * (4.0 * PI).ln() - 0.5 * bundle.log_det_c - 0.25 * bundle.quad_form(&w) - bundle.t * spec.trace_b()
}

/// Γ(z; ζ), zero when t ≤ τ.
pub fn gamma(spec: &OperatorSpec, z: &GroupPoint, zeta: &GroupPoint) -> Result<KernelValue> {
    let s = z.t - zeta.t;
    if !(s > 0.0) {
        return Ok(KernelValue::zero());
    }
    let bundle = gramian_fast(spec, s)?;
    Ok(KernelValue::from_log(log_gamma_with(spec, &bundle, z, zeta)))
}

/// Γ₀(z) = Γ₀(z; 0) for the principal part.
pub fn gamma0(spec: &OperatorSpec, z: &GroupPoint) -> Result<KernelValue> {
    gamma(&spec.principal_part(), z, &GroupPoint::origin(spec.dim()))
}

/// log Γ(x, s; 0, 0) at x = 0: the on-diagonal profile.
pub fn log_on_diagonal(spec: &OperatorSpec, s: f64) -> Result<f64> {
    let bundle = gramian_fast(spec, s)?;
    Ok(-0.5 * spec.dim() as f64 * (4.0 * PI).ln() - 0.5 * bundle.log_det_c - s * spec.trace_b())
}

fn forward_bundle(spec: &OperatorSpec, z: &GroupPoint, zeta: &GroupPoint) -> Result<GramianBundle> {
    let s = z.t - zeta.t;
    if !(s > 0.0) {
        return Err(KolmoError::BadTimeOrder(format!("t - tau = {s} must be positive")));
    }
    gramian_fast(spec, s)
}

/// ∇ₓΓ(z; ζ) in the living spatial variable: −½ Γ C⁻¹w.
pub fn grad_x_gamma(spec: &OperatorSpec, z: &GroupPoint, zeta: &GroupPoint) -> Result<DVector<f64>> {
    let bundle = forward_bundle(spec, z, zeta)?;
    let g = log_gamma_with(spec, &bundle, z, zeta).exp();
    Ok(bundle.solve(&offset(&bundle, z, zeta)) * (-0.5 * g))
}

/// ∇ log Γ(z; ζ) in the pole's spatial variable ξ: ½ E(s)ᵀ C⁻¹w.
pub fn grad_pole_log_gamma(spec: &OperatorSpec, z: &GroupPoint, zeta: &GroupPoint) -> Result<DVector<f64>> {
    let bundle = forward_bundle(spec, z, zeta)?;
    Ok(bundle.e.transpose() * bundle.solve(&offset(&bundle, z, zeta)) * 0.5)
}

/// M(z₀; z) = ⟨A ∇ log Γ, ∇ log Γ⟩, the gradient taken in the spatial
/// variable of z (the pole of Γ(z₀; ·)).
pub fn mean_value_kernel(spec: &OperatorSpec, z0: &GroupPoint, z: &GroupPoint) -> Result<f64> {
    if !(z0.t > z.t) {
        return Err(KolmoError::PoleEvaluation);
    }
    let g = grad_pole_log_gamma(spec, z0, z)?;
    Ok((spec.a() * &g).dot(&g).max(0.0))
}
