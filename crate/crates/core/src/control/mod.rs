//! Minimal-energy steering, admissible curves and attainable sets.
//!
//! Two linear systems share the drift B:
//! - forward: ẋ = −Bx + σω, the SDE's deterministic skeleton, whose
//!   controllability Gramian is 2C(τ);
//! - admissible: ẋ = Bx + (σ/√2)ω with ṫ = −1, the integral curves of
//!   Σ ω_k X_k + Y in the group coordinates.

pub mod reach;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{KolmoError, Result};
use crate::group::GroupPoint;
use crate::kernel::gramian_fast;
use crate::linalg;
use crate::operator::OperatorSpec;
use crate::structure::kalman_rank;

pub use reach::{attainable_contains, attainable_grid, attainable_sample, AttainableGrid, ControlClass, GridCell};

pub const DEFAULT_STEPS: usize = 1 << 16;

/// Piecewise-constant control on a uniform grid of [0, duration].
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGrid {
    pub duration: f64,
    /// steps × m, one row per cell.
    pub omega: DMatrix<f64>,
    pub energy: f64,
}

impl ControlGrid {
    pub fn new(duration: f64, omega: DMatrix<f64>) -> Result<Self> {
        if omega.nrows() == 0 || omega.ncols() == 0 {
            return Err(KolmoError::EmptyControl);
        }
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(KolmoError::NonPositiveTime(duration));
        }
        if omega.iter().any(|v| !v.is_finite()) {
            return Err(KolmoError::NonFinite);
        }
        let energy = omega.norm_squared() * duration / omega.nrows() as f64;
        Ok(Self { duration, omega, energy })
    }

    pub fn zero(duration: f64, steps: usize, m: usize) -> Result<Self> {
        Self::new(duration, DMatrix::zeros(steps, m))
    }

    pub fn steps(&self) -> usize {
        self.omega.nrows()
    }

    pub fn step(&self) -> f64 {
        self.duration / self.steps() as f64
    }

    /// |ω|² per cell.
    pub fn cell_energy_density(&self) -> Vec<f64> {
        self.omega.row_iter().map(|r| r.norm_squared()).collect()
    }
}

/// (e^{Fh}, ∫₀ʰ e^{Fu} du · G) from the exponential of [[F, G], [0, 0]]·h.
pub fn cell_propagator(f: &DMatrix<f64>, g: &DMatrix<f64>, h: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = f.nrows();
    let m = g.ncols();
    let mut big = DMatrix::zeros(n + m, n + m);
    big.view_mut((0, 0), (n, n)).copy_from(&(f * h));
    big.view_mut((0, n), (n, m)).copy_from(&(g * h));
    let e = linalg::expm(&big)?;
    Ok((e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned()))
}

/// Sampled integral curve of Σ ω_k X_k + Y.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleCurve {
    pub start: GroupPoint,
    pub control: ControlGrid,
    /// Curve parameter at the grid nodes, 0 = s₀ < … < s_steps = duration.
    pub params: Vec<f64>,
    pub points: Vec<GroupPoint>,
}

impl AdmissibleCurve {
    pub fn end(&self) -> &GroupPoint {
        self.points.last().expect("curves have at least one node")
    }

    pub fn duration(&self) -> f64 {
        self.control.duration
    }

    /// γ(s) for any s in [0, duration].
    pub fn at(&self, spec: &OperatorSpec, s: f64) -> Result<GroupPoint> {
        let total = self.duration();
        if !(0.0..=total).contains(&s) {
            return Err(KolmoError::InvalidParameter(format!("s = {s} outside [0, {total}]")));
        }
        let h = self.control.step();
        let i = ((s / h).floor() as usize).min(self.control.steps() - 1);
        let ds = s - self.params[i];
        if ds <= 0.0 {
            return Ok(self.points[i].clone());
        }
        let (p, gam) = cell_propagator(spec.b(), &spec.control_matrix(), ds)?;
        let w = self.control.omega.row(i).transpose();
        let x = p * &self.points[i].x + gam * w;
        Ok(GroupPoint::new(x, self.start.t - s))
    }
}

/// Integrates ẋ = Bx + (σ/√2)ω, ṫ = −1 from `start`, exactly per cell.
pub fn integrate_admissible(spec: &OperatorSpec, start: &GroupPoint, control: &ControlGrid) -> Result<AdmissibleCurve> {
    if control.steps() == 0 {
        return Err(KolmoError::EmptyControl);
    }
    if start.dim() != spec.dim() || control.omega.ncols() != spec.m0() {
        return Err(KolmoError::DimensionMismatch("start or control has the wrong size".into()));
    }
    let h = control.step();
    let (p, gam) = cell_propagator(spec.b(), &spec.control_matrix(), h)?;
    let mut params = Vec::with_capacity(control.steps() + 1);
    let mut points = Vec::with_capacity(control.steps() + 1);
    let mut x = start.x.clone();
    params.push(0.0);
    points.push(start.clone());
    for (i, row) in control.omega.row_iter().enumerate() {
        x = &p * &x + &gam * row.transpose();
        let s = if i + 1 == control.steps() { control.duration } else { (i + 1) as f64 * h };
        params.push(s);
        points.push(GroupPoint::new(x.clone(), start.t - s));
    }
    Ok(AdmissibleCurve { start: start.clone(), control: control.clone(), params, points })
}

/// The discrete minimal-energy control for ẋ = Fx + Gω steering x0 to x1
/// in time `duration` with `steps` constant cells. It hits x1 exactly up to
/// rounding and its energy converges to (x1 − e^{FT}x0)ᵀ W⁻¹ (…) as the
/// grid is refined.
pub fn min_energy_control(
    f: &DMatrix<f64>,
    g: &DMatrix<f64>,
    x0: &DVector<f64>,
    x1: &DVector<f64>,
    duration: f64,
    steps: usize,
) -> Result<ControlGrid> {
    let n = f.nrows();
    if steps == 0 {
        return Err(KolmoError::EmptyControl);
    }
    if x0.len() != n || x1.len() != n || g.nrows() != n {
        return Err(KolmoError::DimensionMismatch("endpoint or control matrix size".into()));
    }
    let (rank, full) = kalman_rank(g, f)?;
    if !full {
        return Err(KolmoError::NotControllable { rank, n });
    }
    let h = duration / steps as f64;
    let (p, gam) = cell_propagator(f, g, h)?;
    // endpoint = P^steps x0 + Σ_i P^{steps−1−i} Γ ω_i
    let mut gains = vec![DMatrix::zeros(n, g.ncols()); steps];
    gains[steps - 1] = gam;
    for i in (0..steps - 1).rev() {
        gains[i] = &p * &gains[i + 1];
    }
    let mut free = x0.clone();
    for _ in 0..steps {
        free = &p * free;
    }
    let mut m = DMatrix::zeros(n, n);
    for gi in &gains {
        m += gi * gi.transpose();
    }
    let chol =
        linalg::symmetrize(&m).cholesky().ok_or_else(|| KolmoError::GramianSingular(linalg::min_eigenvalue(&m)))?;
    let target = x1 - &free;
    let mut lambda = chol.solve(&target);
    // one round of refinement against the re-summed endpoint
    let reached = gains.iter().fold(DVector::zeros(n), |acc, gi| acc + gi * (gi.transpose() * &lambda));
    lambda += chol.solve(&(&target - reached));
    let omega = DMatrix::from_fn(steps, g.ncols(), |i, k| gains[i].column(k).dot(&lambda));
    ControlGrid::new(duration, omega)
}

/// Endpoint of ẋ = Fx + Gω under a control grid, integrated per cell.
pub fn endpoint(f: &DMatrix<f64>, g: &DMatrix<f64>, x0: &DVector<f64>, control: &ControlGrid) -> Result<DVector<f64>> {
    let (p, gam) = cell_propagator(f, g, control.step())?;
    Ok(control.omega.row_iter().fold(x0.clone(), |x, w| &p * x + &gam * w.transpose()))
}

/// Minimal-energy control of ẋ = −Bx + σω from x0 at t0 to x1 at t1.
pub fn reach_min_energy(
    spec: &OperatorSpec,
    x0: &DVector<f64>,
    t0: f64,
    x1: &DVector<f64>,
    t1: f64,
    steps: usize,
) -> Result<ControlGrid> {
    if !(t0 < t1) {
        return Err(KolmoError::BadTimeOrder(format!("need t0 < t1, got {t0} and {t1}")));
    }
    min_energy_control(&(-spec.b()), spec.sigma(), x0, x1, t1 - t0, steps)
}

/// Minimal-energy admissible control steering z0 to a target with earlier
/// time.
pub fn steer_admissible(
    spec: &OperatorSpec,
    z0: &GroupPoint,
    target: &GroupPoint,
    steps: usize,
) -> Result<ControlGrid> {
    let duration = z0.t - target.t;
    if !(duration > 0.0) {
        return Err(KolmoError::BadTimeOrder(format!(
            "admissible curves run backward in time: target t = {} is not below {}",
            target.t, z0.t
        )));
    }
    min_energy_control(spec.b(), &spec.control_matrix(), &z0.x, &target.x, duration, steps)
}

/// Normalization of the minimal cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum CostConvention {
    /// Cost ⟨W⁻¹d, d⟩ with W = 2C, the energy of the optimal control.
    #[default]
    Controllability,
    /// Cost ⟨C⁻¹d, d⟩.
    Gramian,
}

/// Minimal energy to steer x0 to x1 in time τ along ẋ = −Bx + σω.
pub fn optimal_cost(
    spec: &OperatorSpec,
    x0: &DVector<f64>,
    x1: &DVector<f64>,
    tau: f64,
    convention: CostConvention,
) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(KolmoError::BadTimeOrder(format!("horizon must be positive, got {tau}")));
    }
    let (rank, full) = kalman_rank(spec.sigma(), spec.b())?;
    if !full {
        return Err(KolmoError::NotControllable { rank, n: spec.dim() });
    }
    let bundle = gramian_fast(spec, tau)?;
    let d = x1 - &bundle.e * x0;
    let q = bundle.quad_form(&d);
    Ok(match convention {
        CostConvention::Controllability => 0.5 * q,
        CostConvention::Gramian => q,
    })
}
