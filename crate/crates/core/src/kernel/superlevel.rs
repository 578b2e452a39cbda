//! Super-level sets Ω_r(z₀) = {z : Γ(z₀; z) > 1/r}, the Harnack level
//! sets and a Monte Carlo check of the mean-value formula.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::{gamma, gramian_fast, log_gamma_with, GramianBundle};
use crate::domain::AxisBox;
use crate::error::{KolmoError, Result};
use crate::group::GroupPoint;
use crate::operator::OperatorSpec;
use crate::rng;

const DEPTH_SCAN_LO: f64 = 1e-12;
const DEPTH_SCAN_HI: f64 = 1e8;
const DEPTH_SCAN_POINTS: usize = 600;
const BOX_TIME_SLICES: usize = 2000;
const BOX_PADDING: f64 = 0.02;

fn check_radius(r: f64) -> Result<()> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(KolmoError::NonPositiveRadius(r));
    }
    Ok(())
}

pub(crate) fn log_diag(spec: &OperatorSpec, b: &GramianBundle) -> f64 {
    -0.5 * spec.dim() as f64 * (4.0 * std::f64::consts::PI).ln() - 0.5 * b.log_det_c - b.t * spec.trace_b()
}

/// z ∈ Ω_r(z₀), i.e. Γ(z₀; z) > 1/r. The pole z₀ itself is excluded.
pub fn superlevel_contains(spec: &OperatorSpec, z: &GroupPoint, z0: &GroupPoint, r: f64) -> Result<bool> {
    check_radius(r)?;
    Ok(gamma(spec, z0, z)?.log_value > -r.ln())
}

/// z ∈ K_r(z₀, ε) = Ω_r(z₀) ∩ {t ≤ t₀ − ε r^{2/Q}}.
pub fn harnack_levelset_contains(
    spec: &OperatorSpec,
    z: &GroupPoint,
    z0: &GroupPoint,
    r: f64,
    eps: f64,
) -> Result<bool> {
    check_radius(r)?;
    if !(eps > 0.0) {
        return Err(KolmoError::InvalidParameter(format!("eps = {eps} must be positive")));
    }
    let q = spec.dilations().homogeneous_dim as f64;
    if z.t > z0.t - eps * r.powf(2.0 / q) {
        return Ok(false);
    }
    superlevel_contains(spec, z, z0, r)
}

/// Largest time lag s with sup_x Γ(z₀; (x, t₀ − s)) ≥ 1/r: the depth of
/// Ω_r(z₀) below its pole.
pub fn superlevel_depth(spec: &OperatorSpec, r: f64) -> Result<f64> {
    check_radius(r)?;
    // a lag whose Gramian cannot be formed (overflow at huge s) counts as outside
    let level = |s: f64| -> Result<f64> {
        Ok(gramian_fast(spec, s).map_or(f64::NEG_INFINITY, |b| log_diag(spec, &b) + r.ln()))
    };
    let ratio = (DEPTH_SCAN_HI / DEPTH_SCAN_LO).ln() / (DEPTH_SCAN_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..DEPTH_SCAN_POINTS).map(|k| DEPTH_SCAN_LO * (ratio * k as f64).exp()).collect();
    let mut last = None;
    for (k, &s) in grid.iter().enumerate() {
        if level(s)? > 0.0 {
            last = Some(k);
        }
    }
    let Some(k) = last else {
        return Err(KolmoError::InvalidParameter(format!("Ω_r is below the scan floor for r = {r}")));
    };
    if k + 1 == grid.len() {
        return Err(KolmoError::InvalidParameter(format!("Ω_r is unbounded in time for r = {r}")));
    }
    let (mut lo, mut hi) = (grid[k], grid[k + 1]);
    while hi - lo > 1e-14 * hi {
        let mid = 0.5 * (lo + hi);
        if level(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Axis-aligned box (over x₁..x_N, t) enclosing Ω_r(z₀).
///
/// Each time slice of Ω_r is the ellipsoid ¼⟨C(s)⁻¹w, w⟩ < ρ²(s) with
/// w = x₀ − E(s)ξ; its coordinate extents are unioned over a dense grid
/// of lags and padded.
pub fn superlevel_box(spec: &OperatorSpec, z0: &GroupPoint, r: f64) -> Result<AxisBox> {
    let depth = superlevel_depth(spec, r)?;
    let n = spec.dim();
    let mut lo = vec![f64::INFINITY; n + 1];
    let mut hi = vec![f64::NEG_INFINITY; n + 1];
    for k in 1..=BOX_TIME_SLICES {
        let s = depth * (k as f64 / BOX_TIME_SLICES as f64).powi(2);
        let b = gramian_fast(spec, s)?;
        let rho2 = log_diag(spec, &b) + r.ln();
        if rho2 <= 0.0 {
            continue;
        }
        let back = super::propagator(spec, -s);
        let centre = &back * &z0.x;
        let cov = &back * &b.c * back.transpose();
        for j in 0..n {
            let half = 2.0 * rho2.sqrt() * cov[(j, j)].max(0.0).sqrt();
            lo[j] = lo[j].min(centre[j] - half);
            hi[j] = hi[j].max(centre[j] + half);
        }
    }
    for j in 0..n {
        if !lo[j].is_finite() {
            lo[j] = z0.x[j];
            hi[j] = z0.x[j];
        }
        let pad = BOX_PADDING * (hi[j] - lo[j]) + 1e-12 * (1.0 + z0.x[j].abs());
        lo[j] -= pad;
        hi[j] += pad;
    }
    lo[n] = z0.t - depth * (1.0 + BOX_PADDING);
    hi[n] = z0.t;
    AxisBox::new(lo, hi)
}

/// An exact solution of ℒu = 0 used to test the mean-value formula.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TestSolution {
    Constant(f64),
    /// Γ(·; pole).
    Kernel(GroupPoint),
}

impl TestSolution {
    pub fn eval(&self, spec: &OperatorSpec, z: &GroupPoint) -> Result<f64> {
        match self {
            TestSolution::Constant(c) => Ok(*c),
            TestSolution::Kernel(pole) => Ok(gamma(spec, z, pole)?.value),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MeanValueSampler {
    /// Lag s = depth·exp(−2E/Q) with E ~ Gamma((N+4)/2), then a uniform
    /// point of the ellipsoidal slice of Ω_r at that lag. E is ρ²(s), and
    /// the slice mass of the kernel grows like E^{(N+2)/2}·e^{−E} in it, so
    /// the lag density follows the kernel mass. That mass is known in
    /// closed form and serves as a control variate: only u − u(z₀) is
    /// sampled within a slice.
    TimeSlices,
    /// Uniform points of the bounding box, rejected outside Ω_r.
    BoxRejection,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanValueReport {
    pub estimate: f64,
    pub exact: f64,
    pub rel_error: f64,
    /// Standard error of `estimate`.
    pub std_error: f64,
    pub samples: usize,
    pub accepted: usize,
}

fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI / n as f64 * unit_ball_volume(n - 2),
    }
}

/// ln Γ(k) for k a positive multiple of ½.
fn ln_gamma_half(k: f64) -> f64 {
    let mut x = if (k - k.floor()).abs() < 0.25 { 1.0 } else { 0.5 };
    let mut acc = if x == 1.0 { 0.0 } else { 0.5 * std::f64::consts::PI.ln() };
    while x < k - 0.25 {
        acc += x.ln();
        x += 1.0;
    }
    acc
}

fn uniform_in_ball<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let radius = rng.random::<f64>().powf(1.0 / n as f64);
    &g * (radius / g.norm())
}

/// ⟨A∇logΓ, ∇logΓ⟩ for the pair (z₀, z) with a known bundle at their lag.
fn kernel_weight(spec: &OperatorSpec, b: &GramianBundle, z0: &GroupPoint, z: &GroupPoint) -> f64 {
    let w = &z0.x - &b.e * &z.x;
    let g = b.e.transpose() * b.solve(&w) * 0.5;
    (spec.a() * &g).dot(&g).max(0.0)
}

struct Tally {
    sum: f64,
    sum_sq: f64,
    accepted: usize,
}

fn slice_draw<R: Rng>(
    spec: &OperatorSpec,
    z0: &GroupPoint,
    r: f64,
    depth: f64,
    u: &TestSolution,
    at_pole: f64,
    rng: &mut R,
) -> Result<Option<f64>> {
    let n = spec.dim();
    let q = spec.dilations().homogeneous_dim as f64;
    let shape = (n as f64 + 4.0) / 2.0;
    let energy: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
    let s = depth * (-2.0 * energy / q).exp();
    if !(s > 0.0) || energy <= 0.0 {
        return Ok(None);
    }
    let log_density = (shape - 1.0) * energy.ln() - energy - ln_gamma_half(shape) + (q / 2.0).ln() - s.ln();
    let b = gramian_fast(spec, s)?;
    let rho2 = log_diag(spec, &b) + r.ln();
    if rho2 <= 0.0 {
        return Ok(None);
    }
    let factor = match b.c.clone().cholesky() {
        Some(ch) => ch.l(),
        None => crate::linalg::sym_sqrt(&b.c),
    };
    let w = &factor * uniform_in_ball(rng, n) * (2.0 * rho2.sqrt());
    let xi = super::propagator(spec, -s) * (&z0.x - &w);
    let z = GroupPoint::new(xi, z0.t - s);
    let log_volume = unit_ball_volume(n).ln() + n as f64 * (2.0 * rho2.sqrt()).ln() + 0.5 * b.log_det_c;
    // mean of M over the slice: ρ² tr(C⁻¹EAEᵀ)/(n+2)
    let pushed = &b.e * spec.sigma();
    let trace: f64 = pushed.column_iter().map(|c| 0.5 * b.quad_form(&c.into_owned())).sum();
    let slice_mean = rho2 * trace / (n as f64 + 2.0);
    let weight = kernel_weight(spec, &b, z0, &z) * (u.eval(spec, &z)? - at_pole) + at_pole * slice_mean;
    Ok(Some(weight * (log_volume + s * spec.trace_b() - log_density).exp()))
}

fn box_draw<R: Rng>(
    spec: &OperatorSpec,
    z0: &GroupPoint,
    r: f64,
    bbox: &AxisBox,
    u: &TestSolution,
    rng: &mut R,
) -> Result<Option<f64>> {
    let c: Vec<f64> = bbox.lo.iter().zip(&bbox.hi).map(|(a, b)| a + (b - a) * rng.random::<f64>()).collect();
    let z = GroupPoint::from_coords(&c);
    let s = z0.t - z.t;
    if !(s > 0.0) {
        return Ok(None);
    }
    let b = gramian_fast(spec, s)?;
    if log_gamma_with(spec, &b, z0, &z) <= -r.ln() {
        return Ok(None);
    }
    let volume: f64 = bbox.lo.iter().zip(&bbox.hi).map(|(a, b)| b - a).product();
    Ok(Some(kernel_weight(spec, &b, z0, &z) * u.eval(spec, &z)? * volume))
}

/// Monte Carlo estimate of (1/r)∫_{Ω_r(z₀)} M(z₀; z) u(z) dz against u(z₀).
pub fn mean_value_verify(
    spec: &OperatorSpec,
    z0: &GroupPoint,
    r: f64,
    u: &TestSolution,
    samples: usize,
    seed: u64,
) -> Result<MeanValueReport> {
    mean_value_verify_with(spec, z0, r, u, samples, seed, MeanValueSampler::TimeSlices)
}

pub fn mean_value_verify_with(
    spec: &OperatorSpec,
    z0: &GroupPoint,
    r: f64,
    u: &TestSolution,
    samples: usize,
    seed: u64,
    sampler: MeanValueSampler,
) -> Result<MeanValueReport> {
    check_radius(r)?;
    if samples < 2 {
        return Err(KolmoError::BadSampleCount(samples));
    }
    if !spec.is_dilation_invariant() {
        return Err(KolmoError::InvalidParameter("the mean-value formula needs a drift without starred blocks".into()));
    }
    if let TestSolution::Kernel(pole) = u {
        let inside = pole == z0 || gamma(spec, z0, pole)?.log_value >= -r.ln() - 1e-9;
        if inside {
            return Err(KolmoError::PoleInsideDomain);
        }
    }
    let exact = u.eval(spec, z0)?;
    if exact == 0.0 {
        return Err(KolmoError::InvalidParameter("test solution vanishes at z0".into()));
    }
    let depth = superlevel_depth(spec, r)?;
    let bbox = match sampler {
        MeanValueSampler::BoxRejection => Some(superlevel_box(spec, z0, r)?),
        MeanValueSampler::TimeSlices => None,
    };
    let tallies: Vec<Result<Tally>> = rng::chunks(samples)
        .into_par_iter()
        .enumerate()
        .map(|(k, range)| {
            let mut rng = rng::stream(seed, k as u64);
            let mut t = Tally { sum: 0.0, sum_sq: 0.0, accepted: 0 };
            for _ in range {
                let v = match &bbox {
                    None => slice_draw(spec, z0, r, depth, u, exact, &mut rng)?,
                    Some(b) => box_draw(spec, z0, r, b, u, &mut rng)?,
                };
                if let Some(v) = v {
                    t.sum += v;
                    t.sum_sq += v * v;
                    t.accepted += 1;
                }
            }
            Ok(t)
        })
        .collect();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut accepted = 0;
    for t in tallies {
        let t = t?;
        sum += t.sum;
        sum_sq += t.sum_sq;
        accepted += t.accepted;
    }
    let nf = samples as f64;
    let mean = sum / nf;
    let var = (sum_sq / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
    let estimate = mean / r;
    Ok(MeanValueReport {
        estimate,
        exact,
        rel_error: ((estimate - exact) / exact).abs(),
        std_error: (var / nf).sqrt() / r,
        samples,
        accepted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::examples::*;
    use std::f64::consts::PI;

    #[test]
    fn pole_is_excluded() {
        let z0 = GroupPoint::from_slice(&[0.2, 0.1], 0.5);
        assert!(!superlevel_contains(&k2(), &z0, &z0, 1.0).unwrap());
        assert!(superlevel_contains(&k2(), &z0, &z0, 0.0).is_err());
    }

    #[test]
    fn on_diagonal_point_inside() {
        // √3/(2πs²) = 2/r puts Γ at twice the level
        let r = 0.5;
        let s = (3f64.sqrt() * r / (4.0 * PI)).sqrt();
        let z0 = GroupPoint::origin(2);
        let z = GroupPoint::from_slice(&[0.0, 0.0], -s);
        assert!(superlevel_contains(&k2(), &z, &z0, r).unwrap());
        let depth = superlevel_depth(&k2(), r).unwrap();
        let exact = (3f64.sqrt() * r / (2.0 * PI)).sqrt();
        assert!((depth / exact - 1.0).abs() < 1e-12);
    }

    #[test]
    fn box_encloses_samples_and_shrinks() {
        let spec = k2();
        let z0 = GroupPoint::from_slice(&[0.3, -0.2], 0.0);
        let r = 0.5;
        let bbox = superlevel_box(&spec, &z0, r).unwrap();
        let mut rng = rng::stream(3, 0);
        let depth = superlevel_depth(&spec, r).unwrap();
        for _ in 0..2000 {
            let s = depth * rng.random::<f64>();
            let b = gramian_fast(&spec, s).unwrap();
            let rho2 = log_diag(&spec, &b) + r.ln();
            if rho2 <= 0.0 {
                continue;
            }
            let l = b.c.clone().cholesky().unwrap().l();
            let w = l * uniform_in_ball(&mut rng, 2) * (2.0 * rho2.sqrt());
            let xi = crate::kernel::propagator(&spec, -s) * (&z0.x - &w);
            let z = GroupPoint::new(xi, z0.t - s);
            assert!(superlevel_contains(&spec, &z, &z0, r * (1.0 + 1e-9)).unwrap());
            assert!(bbox.contains_closed(&z.coords()));
        }
        let small = superlevel_box(&spec, &z0, r / 100.0).unwrap();
        for j in 0..3 {
            assert!(small.hi[j] - small.lo[j] < bbox.hi[j] - bbox.lo[j]);
        }
    }

    #[test]
    fn levelset_slab() {
        let spec = k2();
        let z0 = GroupPoint::origin(2);
        let r: f64 = 0.5;
        let eps = 0.1;
        let above = GroupPoint::from_slice(&[0.0, 0.0], -0.5 * eps * r.powf(0.5));
        assert!(!harnack_levelset_contains(&spec, &above, &z0, r, eps).unwrap());
        let s = (3f64.sqrt() * r / (4.0 * PI)).sqrt();
        let deep = GroupPoint::from_slice(&[0.0, 0.0], -s);
        assert!(s > eps * r.sqrt());
        assert!(harnack_levelset_contains(&spec, &deep, &z0, r, eps).unwrap());
        assert!(harnack_levelset_contains(&spec, &deep, &z0, r, 0.0).is_err());
    }

    #[test]
    fn constant_solution_reproduced() {
        let spec = k2();
        let z0 = GroupPoint::from_slice(&[0.3, -0.2], 0.0);
        let rep = mean_value_verify(&spec, &z0, 0.5, &TestSolution::Constant(1.0), 100_000, 11).unwrap();
        assert!(rep.rel_error < 4.0 * rep.std_error + 1e-3, "{rep:?}");
    }

    #[test]
    fn box_sampler_agrees() {
        let spec = k2();
        let z0 = GroupPoint::origin(2);
        let rep = mean_value_verify_with(
            &spec,
            &z0,
            0.5,
            &TestSolution::Constant(2.0),
            100_000,
            5,
            MeanValueSampler::BoxRejection,
        )
        .unwrap();
        assert!(rep.rel_error < 5.0 * rep.std_error / 2.0 + 1e-3, "{rep:?}");
        assert!(rep.accepted < rep.samples);
    }

    #[test]
    fn verify_preconditions() {
        let z0 = GroupPoint::origin(2);
        let u = TestSolution::Kernel(GroupPoint::from_slice(&[0.0, 0.0], -0.05));
        assert_eq!(mean_value_verify(&k2(), &z0, 0.5, &u, 100, 1), Err(KolmoError::PoleInsideDomain));
        let one = TestSolution::Constant(1.0);
        assert!(mean_value_verify(&k2_with_b00(0.3), &z0, 0.5, &one, 100, 1).is_err());
        assert_eq!(mean_value_verify(&k2(), &z0, 0.5, &one, 1, 1), Err(KolmoError::BadSampleCount(1)));
    }

    #[test]
    fn seeded_runs_repeat() {
        let z0 = GroupPoint::origin(2);
        let one = TestSolution::Constant(1.0);
        let a = mean_value_verify(&k2(), &z0, 0.5, &one, 10_000, 9).unwrap();
        let b = mean_value_verify(&k2(), &z0, 0.5, &one, 10_000, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn half_integer_gamma() {
        assert!(ln_gamma_half(1.0).abs() < 1e-15);
        assert!((ln_gamma_half(3.0) - 2f64.ln()).abs() < 1e-15);
        assert!((ln_gamma_half(0.5) - 0.5 * PI.ln()).abs() < 1e-15);
        assert!((ln_gamma_half(2.5) - (0.75 * PI.sqrt()).ln()).abs() < 1e-14);
    }
}
