//! The homogeneous Lie group on ℝ^{N+1} attached to an operator: the
//! translation law, anisotropic norms, the quasi-distance and the cylinders
//! used by the Harnack machinery.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{KolmoError, Result};
use crate::kernel::propagator;
use crate::operator::{DilationGroup, OperatorSpec};

/// A point z = (x, t) of ℝ^{N+1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPoint {
    pub x: DVector<f64>,
    pub t: f64,
}

impl GroupPoint {
    pub fn new(x: DVector<f64>, t: f64) -> Self {
        Self { x, t }
    }

    pub fn from_slice(x: &[f64], t: f64) -> Self {
        Self { x: DVector::from_column_slice(x), t }
    }

    pub fn origin(n: usize) -> Self {
        Self { x: DVector::zeros(n), t: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.iter().all(|v| v.is_finite())
    }

    /// Coordinates as (x₁, …, x_N, t).
    pub fn coords(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.x.iter().cloned().collect();
        v.push(self.t);
        v
    }

    pub fn from_coords(c: &[f64]) -> Self {
        let n = c.len() - 1;
        Self::from_slice(&c[..n], c[n])
    }
}

/// (x, t) ∘ (ξ, τ) = (ξ + E(τ)x, t + τ).
pub fn compose(z: &GroupPoint, w: &GroupPoint, spec: &OperatorSpec) -> GroupPoint {
    let e = propagator(spec, w.t);
    GroupPoint::new(&w.x + e * &z.x, z.t + w.t)
}

/// (x, t)⁻¹ = (−E(−t)x, −t).
pub fn inverse(z: &GroupPoint, spec: &OperatorSpec) -> GroupPoint {
    let e = propagator(spec, -z.t);
    GroupPoint::new(-(e * &z.x), -z.t)
}

/// |t|^{1/2} + Σ |x_j|^{1/q_j}.
pub fn norm_additive(z: &GroupPoint, group: &DilationGroup) -> f64 {
    z.t.abs().sqrt() + z.x.iter().zip(&group.q).map(|(v, &q)| v.abs().powf(1.0 / q as f64)).sum::<f64>()
}

/// The r > 0 with Σ x_j²/r^{2q_j} + t²/r⁴ = 1.
///
/// Squares instead of the odd powers |x_j|^{q_j} keep the level sets
/// homogeneous under the dilations.
pub fn norm_implicit(z: &GroupPoint, group: &DilationGroup) -> Result<f64> {
    // (log |c|, exponent) per term: term = (|c|^{1/e} / r)^{2e}
    let mut terms: Vec<(f64, f64)> =
        z.x.iter().zip(&group.q).filter(|(v, _)| **v != 0.0).map(|(v, &q)| (v.abs().ln(), q as f64)).collect();
    if z.t != 0.0 {
        terms.push((z.t.abs().ln(), 2.0));
    }
    if terms.is_empty() {
        return Err(KolmoError::ZeroPoint);
    }
    let level = |log_r: f64| -> f64 { terms.iter().map(|(lc, e)| (2.0 * (lc - e * log_r)).exp()).sum() };
    // every single term equals 1 at its own radius; the root is at least the
    // largest of those and at most √(N+1) times it
    let mut lo = terms.iter().map(|(lc, e)| lc / e).fold(f64::NEG_INFINITY, f64::max);
    let mut hi = lo + 0.5 * ((terms.len() as f64).ln()) + 1e-15;
    while level(hi) > 1.0 {
        hi += 1e-3;
    }
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if level(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// d(z, w) = ‖z⁻¹ ∘ w‖.
pub fn distance(z: &GroupPoint, w: &GroupPoint, spec: &OperatorSpec, group: &DilationGroup) -> f64 {
    norm_additive(&compose(&inverse(z, spec), w, spec), group)
}

/// Cylinder parameters 0 < α < β < γ < 1, 0 < δ < 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylinderParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl Default for CylinderParams {
    fn default() -> Self {
        Self { alpha: 0.25, beta: 0.5, gamma: 0.75, delta: 0.5 }
    }
}

impl CylinderParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Result<Self> {
        let p = Self { alpha, beta, gamma, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = 0.0 < self.alpha && self.alpha < self.beta && self.beta < self.gamma && self.gamma < 1.0;
        if !ordered || !(0.0 < self.delta && self.delta < 1.0) {
            return Err(KolmoError::InvalidParameter(format!(
                "need 0 < alpha < beta < gamma < 1 and 0 < delta < 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Time coordinate of the K⁻ slice.
    pub fn slice_time(&self) -> f64 {
        -(self.beta + self.gamma) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CylinderShape {
    /// ]−1,1[^N × ]−1,0[
    UnitBox,
    /// D₀(δ)(]−1,1[^N) × ]−α,0[
    PlusBox,
    /// D₀(δ)(]−1,1[^N) × ]−γ,−β[
    MinusBox,
    /// ]−1,1[^{N+1}
    FullBox,
    /// D₀(δ)(]−1,1[^N) × {−(β+γ)/2}
    MinusSlice,
}

impl CylinderShape {
    pub const ALL: [CylinderShape; 5] = [
        CylinderShape::UnitBox,
        CylinderShape::PlusBox,
        CylinderShape::MinusBox,
        CylinderShape::FullBox,
        CylinderShape::MinusSlice,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CylinderShape::UnitBox => "unit",
            CylinderShape::PlusBox => "plus",
            CylinderShape::MinusBox => "minus",
            CylinderShape::FullBox => "full",
            CylinderShape::MinusSlice => "slice",
        }
    }

    /// Membership of a point already in unit coordinates.
    pub fn contains_unit(&self, u: &GroupPoint, params: &CylinderParams, group: &DilationGroup) -> bool {
        let inside = |scale: f64| u.x.iter().zip(&group.q).all(|(v, &q)| v.abs() < scale.powi(q as i32));
        match self {
            CylinderShape::UnitBox => inside(1.0) && -1.0 < u.t && u.t < 0.0,
            CylinderShape::FullBox => inside(1.0) && u.t.abs() < 1.0,
            CylinderShape::PlusBox => inside(params.delta) && -params.alpha < u.t && u.t < 0.0,
            CylinderShape::MinusBox => inside(params.delta) && -params.gamma < u.t && u.t < -params.beta,
            CylinderShape::MinusSlice => inside(params.delta) && (u.t - params.slice_time()).abs() <= SLICE_TOL,
        }
    }
}

/// Relative time tolerance of the K⁻ slice.
pub const SLICE_TOL: f64 = 1e-9;

/// Unit coordinates D(1/r)(center⁻¹ ∘ z).
pub fn to_unit_coordinates(
    z: &GroupPoint,
    center: &GroupPoint,
    r: f64,
    spec: &OperatorSpec,
    group: &DilationGroup,
) -> Result<GroupPoint> {
    if !(r > 0.0) {
        return Err(KolmoError::NonPositiveRadius(r));
    }
    group.dilate(&compose(&inverse(center, spec), z, spec), 1.0 / r)
}

/// Is z in center ∘ D(r)(shape)?
pub fn cylinder_contains(
    z: &GroupPoint,
    center: &GroupPoint,
    r: f64,
    shape: CylinderShape,
    params: &CylinderParams,
    spec: &OperatorSpec,
    group: &DilationGroup,
) -> Result<bool> {
    let u = to_unit_coordinates(z, center, r, spec, group)?;
    Ok(shape.contains_unit(&u, params, group))
}

/// max over pairs of |f(z) − f(ζ)| / d(z, ζ)^α.
pub fn holder_seminorm(
    samples: &[(GroupPoint, f64)],
    alpha: f64,
    spec: &OperatorSpec,
    group: &DilationGroup,
) -> Result<f64> {
    if samples.len() < 2 {
        return Err(KolmoError::DegenerateSample(format!("{} samples", samples.len())));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(KolmoError::InvalidParameter(format!("alpha = {alpha} not in (0, 1]")));
    }
    let mut best = 0.0f64;
    for (i, (z, fz)) in samples.iter().enumerate() {
        for (w, fw) in &samples[i + 1..] {
            let d = distance(z, w, spec, group);
            if d == 0.0 {
                return Err(KolmoError::DegenerateSample("repeated point".into()));
            }
            best = best.max((fz - fw).abs() / d.powf(alpha));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::examples::{chain3, k2, k2_with_b00};

    fn p(x: &[f64], t: f64) -> GroupPoint {
        GroupPoint::from_slice(x, t)
    }

    fn close(a: &GroupPoint, b: &GroupPoint, tol: f64) -> bool {
        (a.t - b.t).abs() <= tol && (&a.x - &b.x).amax() <= tol
    }

    #[test]
    fn compose_k2_example() {
        let spec = k2();
        let z = compose(&p(&[1.0, 0.0], 1.0), &p(&[0.0, 0.0], 1.0), &spec);
        assert!(close(&z, &p(&[1.0, -1.0], 2.0), 1e-15));
    }

    #[test]
    fn identity_and_inverse() {
        let spec = k2_with_b00(0.4);
        let z = p(&[0.3, -1.2], 0.7);
        let e = GroupPoint::origin(2);
        assert_eq!(compose(&z, &e, &spec), z);
        assert_eq!(compose(&e, &z, &spec), z);
        assert!(close(&compose(&z, &inverse(&z, &spec), &spec), &e, 1e-12));
        assert!(close(&compose(&inverse(&z, &spec), &z, &spec), &e, 1e-12));
        assert_eq!(inverse(&e, &spec), e);
    }

    #[test]
    fn inverse_k2_example() {
        let inv = inverse(&p(&[1.0, 0.0], 1.0), &k2());
        assert!(close(&inv, &p(&[-1.0, -1.0], -1.0), 1e-15));
    }

    #[test]
    fn kolmogorov_three_dimensional_law() {
        // (t,v,y)∘(t0,v0,y0) = (t0+t, v0+v, y0+y−t v0): our compose with the
        // arguments swapped, in coordinates x = (v, y)
        let spec = k2();
        let (t, v, y) = (0.7, -0.4, 1.3);
        let (t0, v0, y0) = (-0.2, 0.9, 0.5);
        let ours = compose(&p(&[v0, y0], t0), &p(&[v, y], t), &spec);
        let expected = p(&[v0 + v, y0 + y - t * v0], t0 + t);
        assert!(close(&ours, &expected, 1e-14));
    }

    #[test]
    fn norm_examples() {
        let g = k2().dilations();
        assert_eq!(norm_additive(&p(&[0.0, 0.0], 4.0), &g), 2.0);
        assert_eq!(norm_additive(&p(&[1.0, 1.0], 0.0), &g), 2.0);
        assert!((norm_implicit(&p(&[0.0, 0.0], 2.0), &g).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert!((norm_implicit(&p(&[1.0, 0.0], 0.0), &g).unwrap() - 1.0).abs() < 1e-12);
        assert!((norm_implicit(&p(&[0.0, -8.0], 0.0), &g).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(norm_implicit(&GroupPoint::origin(2), &g), Err(KolmoError::ZeroPoint));
    }

    #[test]
    fn implicit_norm_is_homogeneous() {
        let g = chain3().dilations();
        let z = p(&[0.3, -2.0, 5.0], -0.4);
        let n = norm_implicit(&z, &g).unwrap();
        for r in [1e-3, 0.5, 3.0, 40.0] {
            let nr = norm_implicit(&g.dilate(&z, r).unwrap(), &g).unwrap();
            assert!((nr / (r * n) - 1.0).abs() < 1e-12, "r = {r}");
        }
    }

    #[test]
    fn distance_basics() {
        let spec = k2();
        let g = spec.dilations();
        let z = p(&[0.5, -0.25], 1.5);
        assert_eq!(distance(&z, &z, &spec, &g), 0.0);
        let d0 = distance(&GroupPoint::origin(2), &z, &spec, &g);
        assert!((d0 - norm_additive(&z, &g)).abs() < 1e-15);
    }

    #[test]
    fn cylinder_examples() {
        let spec = k2();
        let g = spec.dilations();
        let prm = CylinderParams::default();
        let c = p(&[0.2, -0.3], 0.4);
        for r in [0.01, 1.0, 5.0] {
            assert!(cylinder_contains(&c, &c, r, CylinderShape::FullBox, &prm, &spec, &g).unwrap());
            let z = p(&[0.0, 0.0], -r * r / 2.0);
            let o = GroupPoint::origin(2);
            assert!(cylinder_contains(&z, &o, r, CylinderShape::UnitBox, &prm, &spec, &g).unwrap());
        }
        let z = p(&[0.0, 0.0], -prm.beta - 0.01);
        let o = GroupPoint::origin(2);
        assert!(cylinder_contains(&z, &o, 1.0, CylinderShape::MinusBox, &prm, &spec, &g).unwrap());
        assert!(!cylinder_contains(&z, &o, 1.0, CylinderShape::PlusBox, &prm, &spec, &g).unwrap());
        assert!(cylinder_contains(&z, &o, 0.0, CylinderShape::UnitBox, &prm, &spec, &g).is_err());
    }

    #[test]
    fn free_flow_lands_on_the_slice() {
        let spec = k2();
        let g = spec.dilations();
        let prm = CylinderParams::default();
        let a = p(&[0.4, -0.7], 0.3);
        let b = -prm.slice_time();
        let end = p((propagator(&spec, -b) * &a.x).as_slice(), a.t - b);
        assert!(cylinder_contains(&end, &a, 1.0, CylinderShape::MinusSlice, &prm, &spec, &g).unwrap());
    }

    #[test]
    fn params_must_be_ordered() {
        assert!(CylinderParams::new(0.5, 0.25, 0.75, 0.5).is_err());
        assert!(CylinderParams::new(0.1, 0.2, 0.3, 1.0).is_err());
        assert!(CylinderParams::new(0.1, 0.2, 0.3, 0.4).is_ok());
    }

    #[test]
    fn holder_examples() {
        let spec = k2();
        let g = spec.dilations();
        let pts = [p(&[0.0, 0.0], 0.0), p(&[1.0, 0.0], 0.0), p(&[0.0, 0.0], 1.0)];
        let constant: Vec<_> = pts.iter().map(|z| (z.clone(), 2.0)).collect();
        assert_eq!(holder_seminorm(&constant, 0.5, &spec, &g).unwrap(), 0.0);
        let pair = vec![(pts[0].clone(), 0.0), (pts[1].clone(), 1.0)];
        assert_eq!(holder_seminorm(&pair, 1.0, &spec, &g).unwrap(), 1.0);
        assert!(holder_seminorm(&pair[..1], 1.0, &spec, &g).is_err());
        let dup = vec![(pts[0].clone(), 0.0), (pts[0].clone(), 1.0)];
        assert!(matches!(holder_seminorm(&dup, 1.0, &spec, &g), Err(KolmoError::DegenerateSample(_))));
    }
}
