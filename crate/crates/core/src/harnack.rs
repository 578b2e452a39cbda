//! Harnack chains along admissible curves.
//!
//! A chain is a finite sequence γ(s₀), …, γ(s_k) with each point inside the
//! past cylinder Q⁻ of its predecessor, every cylinder Q of the chain inside
//! the domain. Each link multiplies the bound by the Harnack constant c.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::control::{integrate_admissible, steer_admissible, AdmissibleCurve, AttainableGrid, ControlClass};
use crate::domain::BoxDomain;
use crate::error::{KolmoError, Result};
use crate::group::{cylinder_contains, to_unit_coordinates, CylinderParams, CylinderShape, GroupPoint};
use crate::kernel::propagator;
use crate::linalg;
use crate::operator::OperatorSpec;

const RADIUS_REL_TOL: f64 = 1e-6;
const EDGE_SAMPLES: usize = 16;
const MAX_RADIUS_SAMPLES: usize = 1024;
/// Safety factor on the Cauchy–Schwarz energy threshold.
const LEMMA_SAFETY: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HarnackParams {
    /// Harnack constant.
    pub c: f64,
    /// Window energy threshold.
    pub h: f64,
    pub cylinder: CylinderParams,
    /// Largest cylinder radius the Harnack inequality is applied with.
    pub r_cap: f64,
    /// Use δ₀ ≤ β·r₀ instead of δ₀ ≤ β·r₀².
    pub literal_delta: bool,
    pub max_links: usize,
    /// Radius samples per control cell.
    pub refine: usize,
}

impl Default for HarnackParams {
    fn default() -> Self {
        Self {
            c: std::f64::consts::E,
            h: 1.0,
            cylinder: CylinderParams::default(),
            r_cap: 1.0,
            literal_delta: false,
            max_links: 1_000_000,
            refine: 4,
        }
    }
}

impl HarnackParams {
    pub fn validate(&self) -> Result<()> {
        self.cylinder.validate()?;
        if !(self.c >= 1.0 && self.c.is_finite()) {
            return Err(KolmoError::InvalidParameter(format!("Harnack constant must be >= 1, got {}", self.c)));
        }
        if !(self.h > 0.0) || !(self.r_cap > 0.0) || self.refine == 0 || self.max_links == 0 {
            return Err(KolmoError::InvalidParameter("h, r_cap, refine and max_links must be positive".into()));
        }
        Ok(())
    }
}

/// Points of the closed unit cube [−1,1]^{N+1} checked for containment:
/// the 3^{N+1} corner, edge and face midpoints, and EDGE_SAMPLES points
/// along every edge.
fn cube_probe(d: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for code in 0..3usize.pow(d as u32) {
        let mut c = code;
        out.push(
            (0..d)
                .map(|_| {
                    let v = (c % 3) as f64 - 1.0;
                    c /= 3;
                    v
                })
                .collect(),
        );
    }
    for axis in 0..d {
        for corner in 0..(1usize << (d - 1)) {
            for i in 1..EDGE_SAMPLES {
                let mut p = Vec::with_capacity(d);
                let mut bits = corner;
                for j in 0..d {
                    if j == axis {
                        p.push(-1.0 + 2.0 * i as f64 / EDGE_SAMPLES as f64);
                    } else {
                        p.push(if bits & 1 == 1 { 1.0 } else { -1.0 });
                        bits >>= 1;
                    }
                }
                out.push(p);
            }
        }
    }
    out
}

/// Is the closure of z ∘ D(r)(]−1,1[^{N+1}) inside the closed domain at
/// every probe point?
fn sheared_box_inside(spec: &OperatorSpec, z: &GroupPoint, r: f64, domain: &BoxDomain, probe: &[Vec<f64>]) -> bool {
    let group = spec.dilations();
    let n = spec.dim();
    let d0 = group.spatial_matrix(r);
    let mut flows: Vec<(f64, DMatrix<f64>)> = Vec::new();
    let mut coords = vec![0.0; n + 1];
    for p in probe {
        let tau = p[n] * r * r;
        let e = match flows.iter().find(|(t, _)| *t == tau) {
            Some((_, e)) => e,
            None => {
                flows.push((tau, propagator(spec, tau)));
                &flows.last().unwrap().1
            }
        };
        let xi = nalgebra::DVector::from_column_slice(&p[..n]);
        let x = &d0 * xi + e * &z.x;
        coords[..n].copy_from_slice(x.as_slice());
        coords[n] = z.t + tau;
        if !domain.boxes.iter().any(|b| b.contains_closed(&coords)) || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
    }
    true
}

fn radius_with_hint(
    spec: &OperatorSpec,
    z: &GroupPoint,
    domain: &BoxDomain,
    hint: f64,
    probe: &[Vec<f64>],
) -> Result<f64> {
    if !domain.contains(z) {
        return Err(KolmoError::PointOnBoundary);
    }
    let ok = |r: f64| sheared_box_inside(spec, z, r, domain, probe);
    let (mut lo, mut hi);
    if ok(hint) {
        lo = hint;
        hi = hint * 2.0;
        let mut guard = 0;
        while ok(hi) {
            lo = hi;
            hi *= 2.0;
            guard += 1;
            if guard > 200 {
                return Err(KolmoError::InvalidParameter("domain appears unbounded".into()));
            }
        }
    } else {
        hi = hint;
        lo = hint / 2.0;
        while !ok(lo) {
            hi = lo;
            lo /= 2.0;
            if lo < 1e-300 {
                return Err(KolmoError::PointOnBoundary);
            }
        }
    }
    while hi - lo > RADIUS_REL_TOL * lo {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// sup{r : z ∘ D(r)(]−1,1[^{N+1}) ⊆ Ω} at z, from below.
pub fn tube_radius_at(spec: &OperatorSpec, z: &GroupPoint, domain: &BoxDomain) -> Result<f64> {
    domain.check_dim(spec.dim())?;
    let probe = cube_probe(spec.dim() + 1);
    let margin = domain.boxes.iter().map(|b| b.margin(&z.coords())).fold(0.0, f64::max);
    radius_with_hint(spec, z, domain, margin.max(1e-3), &probe)
}

/// The tube radius r(s) at γ(s).
pub fn tube_radius(spec: &OperatorSpec, curve: &AdmissibleCurve, domain: &BoxDomain, s: f64) -> Result<f64> {
    tube_radius_at(spec, &curve.at(spec, s)?, domain)
}

/// Past cylinder around the last chain point containing the target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TerminalNeighborhood {
    pub center: GroupPoint,
    pub radius: f64,
    pub shape: CylinderShape,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarnackChain {
    pub points: Vec<GroupPoint>,
    /// Curve parameters s_j of the points.
    pub params: Vec<f64>,
    /// radii[j] is the radius of the cylinder at points[j].
    pub radii: Vec<f64>,
    pub k: usize,
    pub delta0: f64,
    pub r0: f64,
    pub bound: f64,
    pub log_bound: f64,
    pub terminal: Option<TerminalNeighborhood>,
}

/// Cumulative energy I(s) = ∫₀ˢ|ω|² of a piecewise-constant control.
struct EnergyProfile {
    step: f64,
    total: f64,
    cumulative: Vec<f64>,
    density: Vec<f64>,
}

impl EnergyProfile {
    fn new(curve: &AdmissibleCurve) -> Self {
        let density = curve.control.cell_energy_density();
        let step = curve.control.step();
        let mut cumulative = vec![0.0];
        for d in &density {
            cumulative.push(cumulative.last().unwrap() + d * step);
        }
        Self { step, total: curve.duration(), cumulative, density }
    }

    fn at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.total);
        let i = ((s / self.step).floor() as usize).min(self.density.len() - 1);
        self.cumulative[i] + self.density[i] * (s - i as f64 * self.step)
    }

    /// max over windows [a, a + w] ⊆ [0, T]. The window integral is
    /// piecewise linear in a, so its maximum has one end on a grid node.
    fn window_max(&self, w: f64) -> f64 {
        if w >= self.total {
            return self.at(self.total);
        }
        let mut best = 0.0f64;
        for i in 0..self.cumulative.len() {
            let node = (i as f64 * self.step).min(self.total);
            if node + w <= self.total {
                best = best.max(self.at(node + w) - self.cumulative[i]);
            }
            if node - w >= 0.0 {
                best = best.max(self.cumulative[i] - self.at(node - w));
            }
        }
        best
    }
}

/// Window energy below which γ(a + Δ) lies in the K⁻ slice of radius
/// √(2Δ/(β+γ)) around γ(a). The deviation from the free flow satisfies
/// |dev_j|² ≤ energy · W_Δ,jj with W_Δ = ∫₀^Δ e^{Bu}GGᵀe^{Bᵀu} du.
pub fn lemma_energy_threshold(spec: &OperatorSpec, width: f64, cylinder: &CylinderParams) -> Result<f64> {
    let g = spec.control_matrix();
    let (_, w) = linalg::exp_and_gramian(spec.b(), &(&g * g.transpose()), width)?;
    let r = (2.0 * width / (cylinder.beta + cylinder.gamma)).sqrt();
    let group = spec.dilations();
    let mut best = f64::INFINITY;
    for (j, &q) in group.q.iter().enumerate() {
        let allowed = (cylinder.delta * r).powi(2 * q as i32);
        if w[(j, j)] > 0.0 {
            best = best.min(allowed / w[(j, j)]);
        }
    }
    Ok(LEMMA_SAFETY * best)
}

fn chain_schedule(total: f64, delta0: f64) -> (usize, Vec<f64>) {
    let mut k = (total / delta0).ceil().max(1.0) as usize;
    while k > 1 && (k - 1) as f64 * delta0 >= total {
        k -= 1;
    }
    let mut s: Vec<f64> = (0..k).map(|j| j as f64 * delta0).collect();
    s.push(total);
    (k, s)
}

fn radius_samples(curve: &AdmissibleCurve, refine: usize) -> Vec<f64> {
    let count = (curve.control.steps() * refine).clamp(1, MAX_RADIUS_SAMPLES);
    let total = curve.duration();
    let mut s: Vec<f64> = (0..=count).map(|i| total * i as f64 / count as f64).collect();
    s.extend(curve.params.iter().copied());
    s.sort_by(f64::total_cmp);
    s.dedup();
    s
}

/// Builds the chain along `curve`: r₀ from sampled tube radii, the largest
/// admissible δ₀, points at s_j = jδ₀ and the terminal parameter T.
pub fn build_chain(
    spec: &OperatorSpec,
    curve: &AdmissibleCurve,
    domain: &BoxDomain,
    params: &HarnackParams,
) -> Result<HarnackChain> {
    params.validate()?;
    domain.check_dim(spec.dim())?;
    for (s, p) in curve.params.iter().zip(&curve.points) {
        if !domain.contains(p) {
            return Err(KolmoError::CurveExitsDomain(*s));
        }
    }
    let probe = cube_probe(spec.dim() + 1);
    let mut r_min = f64::INFINITY;
    let mut hint = params.r_cap;
    for s in radius_samples(curve, params.refine) {
        let z = curve.at(spec, s)?;
        if !domain.contains(&z) {
            return Err(KolmoError::CurveExitsDomain(s));
        }
        let r = radius_with_hint(spec, &z, domain, hint, &probe)?;
        hint = r;
        r_min = r_min.min(r);
    }
    let mut r0 = r_min.min(params.r_cap);
    let cyl = params.cylinder;
    let total = curve.duration();
    let energy = EnergyProfile::new(curve);

    // Chain points are not always radius samples; shrink r₀ until every
    // chain cylinder passes the containment probe.
    for _ in 0..20 {
        let delta_max = if params.literal_delta { cyl.beta * r0 } else { cyl.beta * r0 * r0 };
        let feasible = |d: f64| -> Result<bool> {
            let (k, s) = chain_schedule(total, d);
            let last = s[k] - s[k - 1];
            for width in [d.min(total), last] {
                let limit = params.h.min(lemma_energy_threshold(spec, width, &cyl)?);
                if energy.window_max(width) > limit {
                    return Ok(false);
                }
            }
            Ok(true)
        };
        let delta0 = if feasible(delta_max)? {
            delta_max
        } else {
            let floor = energy.step.min(delta_max);
            if !feasible(floor)? {
                return Err(KolmoError::EnergyWindowUnsatisfiable);
            }
            let (mut lo, mut hi) = (floor, delta_max);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if feasible(mid)? {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        let k_estimate = (total / delta0).ceil();
        if k_estimate > params.max_links as f64 {
            return Err(KolmoError::InvalidParameter(format!(
                "chain needs {k_estimate} links, above max_links = {}",
                params.max_links
            )));
        }
        let (k, s) = chain_schedule(total, delta0);
        let points: Vec<GroupPoint> = s.iter().map(|&v| curve.at(spec, v)).collect::<Result<_>>()?;
        let radii: Vec<f64> = s.windows(2).map(|w| (2.0 * (w[1] - w[0]) / (cyl.beta + cyl.gamma)).sqrt()).collect();
        let contained = points[..k]
            .iter()
            .zip(&radii)
            .all(|(p, &r)| sheared_box_inside(spec, p, r, domain, &probe) || params.literal_delta);
        if !contained {
            r0 *= 0.9;
            continue;
        }
        let log_bound = k as f64 * params.c.ln();
        let terminal = Some(TerminalNeighborhood {
            center: points[k - 1].clone(),
            radius: radii[k - 1],
            shape: CylinderShape::MinusBox,
        });
        return Ok(HarnackChain {
            points,
            params: s,
            radii,
            k,
            delta0,
            r0,
            bound: params.c.powi(k as i32),
            log_bound,
            terminal,
        });
    }
    Err(KolmoError::CurveExitsDomain(0.0))
}

/// Per-link verification of a chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainAudit {
    pub links: usize,
    /// points[j+1] ∈ Q⁻_{radii[j]}(points[j]).
    pub membership: usize,
    /// points[j+1] on the K⁻ slice of radius radii[j] around points[j].
    pub lemma: usize,
    /// Q_{radii[j]}(points[j]) ⊆ Ω via the tube radius.
    pub containment: usize,
    pub k_matches: bool,
    pub bound_matches: bool,
}

impl ChainAudit {
    pub fn all_pass(&self) -> bool {
        self.membership == self.links
            && self.lemma == self.links
            && self.containment == self.links
            && self.k_matches
            && self.bound_matches
    }
}

pub fn audit_chain(
    spec: &OperatorSpec,
    chain: &HarnackChain,
    domain: &BoxDomain,
    params: &HarnackParams,
) -> Result<ChainAudit> {
    let group = spec.dilations();
    let cyl = params.cylinder;
    let mut audit = ChainAudit {
        links: chain.k,
        membership: 0,
        lemma: 0,
        containment: 0,
        k_matches: false,
        bound_matches: chain.bound == params.c.powi(chain.k as i32),
    };
    let total = *chain.params.last().unwrap_or(&0.0);
    let expected_k = (total / chain.delta0).ceil().max(1.0) as usize;
    audit.k_matches = chain.k == expected_k || (chain.k + 1 == expected_k && (chain.k as f64) * chain.delta0 >= total);
    for j in 0..chain.k {
        let (a, b, r) = (&chain.points[j], &chain.points[j + 1], chain.radii[j]);
        if cylinder_contains(b, a, r, CylinderShape::MinusBox, &cyl, spec, &group)? {
            audit.membership += 1;
        }
        let u = to_unit_coordinates(b, a, r, spec, &group)?;
        if CylinderShape::MinusSlice.contains_unit(&u, &cyl, &group) {
            audit.lemma += 1;
        }
        if tube_radius_at(spec, a, domain)? >= r * (1.0 - RADIUS_REL_TOL) {
            audit.containment += 1;
        }
    }
    Ok(audit)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetBound {
    pub target: GroupPoint,
    pub k: usize,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarnackBoundReport {
    pub targets: Vec<TargetBound>,
    /// max over targets.
    pub bound: f64,
}

/// Chain from z0 to one target along the minimal-energy admissible curve.
pub fn chain_to_target(
    spec: &OperatorSpec,
    z0: &GroupPoint,
    target: &GroupPoint,
    domain: &BoxDomain,
    params: &HarnackParams,
    steps: usize,
) -> Result<Option<HarnackChain>> {
    if target == z0 {
        return Ok(None);
    }
    let control =
        steer_admissible(spec, z0, target, steps).map_err(|e| KolmoError::TargetNotAttainable(e.to_string()))?;
    let curve = integrate_admissible(spec, z0, &control)?;
    match build_chain(spec, &curve, domain, params) {
        Err(KolmoError::CurveExitsDomain(s)) => {
            Err(KolmoError::TargetNotAttainable(format!("the minimal-energy curve leaves the domain at s = {s}")))
        }
        other => other.map(Some),
    }
}

/// sup over targets of u ≤ C u(z0), with C = max of the per-target c^k.
pub fn harnack_bound(
    spec: &OperatorSpec,
    z0: &GroupPoint,
    targets: &[GroupPoint],
    domain: &BoxDomain,
    params: &HarnackParams,
    steps: usize,
) -> Result<HarnackBoundReport> {
    let entries: Vec<TargetBound> = targets
        .par_iter()
        .map(|t| {
            let chain = chain_to_target(spec, z0, t, domain, params, steps)?;
            let (k, bound) = chain.map_or((0, 1.0), |c| (c.k, c.bound));
            Ok(TargetBound { target: t.clone(), k, bound })
        })
        .collect::<Result<_>>()?;
    let bound = entries.iter().map(|e| e.bound).fold(1.0, f64::max);
    Ok(HarnackBoundReport { targets: entries, bound })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportCell {
    pub layer: usize,
    pub center: Vec<f64>,
    pub t: f64,
    pub state: Vec<f64>,
    /// Chain length and c^k where a chain was built.
    pub k: Option<usize>,
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropagationReport {
    pub z0: GroupPoint,
    pub class: ControlClass,
    pub resolution: usize,
    pub attainable_cells: usize,
    pub certified_cells: usize,
    pub cells: Vec<ReportCell>,
}

/// Attainable cells of z0, each with a Harnack bound where a chain along
/// the minimal-energy curve to the cell's reached state exists. Certified
/// cells are where a nonnegative solution vanishing at z0 must vanish.
pub fn strong_max_report(
    spec: &OperatorSpec,
    z0: &GroupPoint,
    domain: &BoxDomain,
    params: &HarnackParams,
    class: ControlClass,
    resolution: usize,
    steps: usize,
) -> Result<PropagationReport> {
    let grid: AttainableGrid = crate::control::attainable_grid(spec, z0, domain, class, resolution)?;
    let cells: Vec<ReportCell> = grid
        .cells()
        .into_par_iter()
        .filter(|c| c.layer > 0)
        .map(|c| {
            let target = GroupPoint::from_slice(&c.state, c.t);
            let chain = chain_to_target(spec, z0, &target, domain, params, steps).ok().flatten();
            ReportCell {
                layer: c.layer,
                center: c.center,
                t: c.t,
                state: c.state,
                k: chain.as_ref().map(|ch| ch.k),
                bound: chain.as_ref().map(|ch| ch.bound),
            }
        })
        .collect();
    let certified = cells.iter().filter(|c| c.bound.is_some()).count();
    Ok(PropagationReport {
        z0: z0.clone(),
        class,
        resolution,
        attainable_cells: cells.len(),
        certified_cells: certified,
        cells,
    })
}
