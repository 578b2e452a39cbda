//! Quadrature checks of the kernel identities: normalization in the pole
//! variable, Chapman–Kolmogorov reproduction, and the comparison bounds
//! against Γ₀ and against isotropic kernels.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::quadrature::gaussian_expectation;
use super::superlevel::{log_diag, superlevel_depth};
use super::{gamma, gramian_fast, log_gamma_with};
use crate::error::{KolmoError, Result};
use crate::group::GroupPoint;
use crate::operator::OperatorSpec;
use crate::rng;

/// log density of N(mean, cov) at y.
fn log_normal_density(y: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let n = y.len() as f64;
    let ch = cov.clone().cholesky().ok_or_else(|| KolmoError::GramianSingular(crate::linalg::min_eigenvalue(cov)))?;
    let d = y - mean;
    let v = ch.l().solve_lower_triangular(&d).expect("triangular solve");
    let log_det: f64 = 2.0 * ch.l().diagonal().iter().map(|l| l.ln()).sum::<f64>();
    Ok(-0.5 * n * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det - 0.5 * v.norm_squared())
}

/// ∫ Γ(x, t; ξ, 0) dξ at x = 0 by a Gauss–Hermite rule over a Gaussian
/// reference wider than the ξ-profile of Γ. Expected value 1.
pub fn normalization_check(spec: &OperatorSpec, t: f64, nodes: usize) -> Result<f64> {
    let b = gramian_fast(spec, t)?;
    let n = spec.dim();
    let back = super::propagator(spec, -t);
    let z = GroupPoint::origin(n);
    let cov = &back * &b.c * back.transpose() * 3.0;
    let mean = DVector::zeros(n);
    let mut failure = None;
    let value = gaussian_expectation(&mean, &cov, nodes, |xi| {
        let pole = GroupPoint::new(xi.clone(), 0.0);
        match log_normal_density(xi, &mean, &cov) {
            Ok(lref) => (log_gamma_with(spec, &b, &z, &pole) - lref).exp(),
            Err(e) => {
                failure = Some(e);
                0.0
            }
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

/// ∫ Γ(x, t; 0, 0) dx, which equals e^{−t tr B}.
pub fn living_mass_check(spec: &OperatorSpec, t: f64, nodes: usize) -> Result<f64> {
    let b = gramian_fast(spec, t)?;
    let n = spec.dim();
    let pole = GroupPoint::origin(n);
    let cov = &b.c * 3.0;
    let mean = DVector::zeros(n);
    let lref_cov = cov.clone();
    let value = gaussian_expectation(&mean, &cov, nodes, |x| {
        let z = GroupPoint::new(x.clone(), t);
        let lref = log_normal_density(x, &mean, &lref_cov).unwrap_or(f64::NAN);
        (log_gamma_with(spec, &b, &z, &pole) - lref).exp()
    });
    if value.is_finite() {
        Ok(value)
    } else {
        Err(KolmoError::GramianSingular(0.0))
    }
}

/// Relative error between Γ(z; ζ) and ∫ Γ(x, t; y, s) Γ(y, s; ξ, τ) dy.
///
/// The y-integral runs against the Gaussian whose precision is the sum of
/// the two factors' precisions in y, so the rule stays accurate when s is
/// close to either end.
pub fn chapman_check(spec: &OperatorSpec, z: &GroupPoint, zeta: &GroupPoint, s: f64, nodes: usize) -> Result<f64> {
    if !(zeta.t < s && s < z.t) {
        return Err(KolmoError::BadTimeOrder(format!("need tau < s < t, got {} < {s} < {}", zeta.t, z.t)));
    }
    let late = gramian_fast(spec, z.t - s)?;
    let early = gramian_fast(spec, s - zeta.t)?;
    // y-profile of Γ(x,t;y,s): mean E⁻¹x, covariance 2E⁻¹CE⁻ᵀ
    let back = super::propagator(spec, -(z.t - s));
    let m1 = &back * &z.x;
    let cov1 = &back * &late.c * back.transpose() * 2.0;
    // y-profile of Γ(y,s;ξ,τ): mean Eξ, covariance 2C
    let m2 = &early.e * &zeta.x;
    let cov2 = &early.c * 2.0;
    let p1 = cov1.clone().try_inverse().ok_or(KolmoError::GramianSingular(0.0))?;
    let p2 = cov2.try_inverse().ok_or(KolmoError::GramianSingular(0.0))?;
    let cov = crate::linalg::symmetrize(&(&p1 + &p2).try_inverse().ok_or(KolmoError::GramianSingular(0.0))?);
    let mean = &cov * (&p1 * &m1 + &p2 * &m2);
    let lhs = gamma(spec, z, zeta)?;
    let rhs = gaussian_expectation(&mean, &cov, nodes, |y| {
        let mid = GroupPoint::new(y.clone(), s);
        let lref = log_normal_density(y, &mean, &cov).unwrap_or(f64::NAN);
        let l = log_gamma_with(spec, &late, z, &mid) + log_gamma_with(spec, &early, &mid, zeta) - lref;
        (l - lhs.log_value).exp()
    });
    if !rhs.is_finite() {
        return Err(KolmoError::GramianSingular(0.0));
    }
    Ok((rhs - 1.0).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelError {
    pub level: f64,
    /// max |Γ/Γ₀ − 1| over sampled z with Γ₀(z) ≥ level.
    pub eps: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub levels: Vec<LevelError>,
    pub non_increasing: bool,
    /// max Γ/Γ⁺ on the sampled window.
    pub c_plus: f64,
    /// min Γ/Γ⁻ on the sampled window.
    pub c_minus: f64,
    pub lambda: f64,
}

/// Draws points z = (x, s) with Γ₀(z; 0) ≥ level.
fn sample_level_set<R: Rng>(principal: &OperatorSpec, level: f64, n: usize, rng: &mut R) -> Result<Vec<GroupPoint>> {
    let depth = superlevel_depth(principal, 1.0 / level)?;
    let q = principal.dilations().homogeneous_dim as f64;
    let dim = principal.dim();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let s = depth * rng.random::<f64>().powf(2.0 / q);
        if s <= 0.0 {
            continue;
        }
        let b = gramian_fast(principal, s)?;
        let rho2 = log_diag(principal, &b) - level.ln();
        if rho2 <= 0.0 {
            continue;
        }
        let g = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let u = &g * (rng.random::<f64>().powf(1.0 / dim as f64) / g.norm());
        let l = crate::linalg::sym_sqrt(&b.c);
        out.push(GroupPoint::new(l * u * (2.0 * rho2.sqrt()), s));
    }
    Ok(out)
}

/// ε(K) = max |Γ/Γ₀ − 1| over sampled points with Γ₀ ≥ K, and the
/// empirical constants of c⁻Γ⁻ ≤ Γ ≤ c⁺Γ⁺ on t ∈ (0, 1].
pub fn comparison_bounds_check(
    spec: &OperatorSpec,
    levels: &[f64],
    per_level: usize,
    seed: u64,
) -> Result<ComparisonReport> {
    if levels.is_empty() || levels.iter().any(|k| !(*k > 0.0)) {
        return Err(KolmoError::InvalidParameter("levels must be positive".into()));
    }
    if per_level < 2 {
        return Err(KolmoError::BadSampleCount(per_level));
    }
    let principal = spec.principal_part();
    let origin = GroupPoint::origin(spec.dim());
    let mut rng = rng::stream(seed, 0);
    let mut pool = Vec::new();
    for &k in levels {
        for z in sample_level_set(&principal, k, per_level, &mut rng)? {
            let g0 = gamma(&principal, &z, &origin)?;
            let g = gamma(spec, &z, &origin)?;
            pool.push((g0.log_value, (g.log_value - g0.log_value).exp_m1().abs(), z));
        }
    }
    let mut sorted: Vec<f64> = levels.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rows: Vec<LevelError> = sorted
        .iter()
        .map(|&k| {
            let sel: Vec<f64> = pool.iter().filter(|(l0, _, _)| *l0 >= k.ln()).map(|(_, e, _)| *e).collect();
            LevelError { level: k, eps: sel.iter().cloned().fold(0.0, f64::max), count: sel.len() }
        })
        .collect();
    let non_increasing = rows.windows(2).all(|w| w[1].eps <= w[0].eps);

    let lambda = spec.lambda();
    let upper = spec.with_isotropic_diffusion(lambda)?;
    let lower = spec.with_isotropic_diffusion(1.0 / lambda)?;
    let mut c_plus = 0.0f64;
    let mut c_minus = f64::INFINITY;
    for (_, _, z) in pool.iter().filter(|(_, _, z)| z.t <= 1.0) {
        let g = gamma(spec, z, &origin)?.log_value;
        c_plus = c_plus.max((g - gamma(&upper, z, &origin)?.log_value).exp());
        c_minus = c_minus.min((g - gamma(&lower, z, &origin)?.log_value).exp());
    }
    Ok(ComparisonReport { levels: rows, non_increasing, c_plus, c_minus, lambda })
}
