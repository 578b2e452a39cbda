//! Attainable sets on a space-time grid, random admissible curves, and
//! Hausdorff comparison against reference sets.
//!
//! The grid has cells of width 1/res in every spatial coordinate and time
//! layers dt = 1/res apart, starting at t₀. Each occupied cell keeps one
//! exact reached state (the cheapest in energy), so slow drift is not lost
//! to snapping. One step applies a constant control over dt, exactly.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::cell_propagator;
use crate::domain::BoxDomain;
use crate::error::{KolmoError, Result};
use crate::group::GroupPoint;
use crate::operator::OperatorSpec;
use crate::rng;

pub const DEFAULT_RESOLUTION: usize = 64;
const MAX_LAYER_CELLS: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ControlClass {
    /// ∫|ω|² ≤ h over the whole curve.
    L2Budget(f64),
    /// |ω(s)| ≤ M.
    Bounded(f64),
    Unbounded,
}

impl ControlClass {
    fn validate(&self) -> Result<()> {
        match *self {
            ControlClass::L2Budget(v) | ControlClass::Bounded(v) if !(v > 0.0 && v.is_finite()) => {
                Err(KolmoError::InvalidParameter(format!("control class bound must be positive, got {v}")))
            }
            _ => Ok(()),
        }
    }
}

/// One occupied cell of a layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    pub layer: usize,
    pub index: Vec<usize>,
    pub center: Vec<f64>,
    pub t: f64,
    /// The reached state kept for this cell.
    pub state: Vec<f64>,
    pub energy: f64,
}

#[derive(Debug, Clone, Default)]
struct Layer {
    cells: Vec<u32>,
    states: Vec<f64>,
    energy: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AttainableGrid {
    pub z0: GroupPoint,
    pub class: ControlClass,
    pub resolution: usize,
    pub cell: f64,
    pub dt: f64,
    pub lo: Vec<f64>,
    pub shape: Vec<usize>,
    layers: Vec<Layer>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Occupancy {
    pub t0: f64,
    pub cell: f64,
    pub dt: f64,
    pub lo: Vec<f64>,
    pub shape: Vec<usize>,
    /// Flat row-major cell indices per time layer.
    pub layers: Vec<Vec<u32>>,
}

impl AttainableGrid {
    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layer_time(&self, k: usize) -> f64 {
        self.z0.t - k as f64 * self.dt
    }

    pub fn occupied(&self) -> usize {
        self.layers.iter().map(|l| l.cells.len()).sum()
    }

    fn flat_of(&self, x: &[f64]) -> Option<u32> {
        flat_index(x, &self.lo, &self.shape, self.cell)
    }

    fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.shape.len()];
        for j in (0..self.shape.len()).rev() {
            idx[j] = flat % self.shape[j];
            flat /= self.shape[j];
        }
        idx
    }

    pub fn center(&self, index: &[usize]) -> Vec<f64> {
        index.iter().zip(&self.lo).map(|(&i, lo)| lo + (i as f64 + 0.5) * self.cell).collect()
    }

    /// Layer and flat cell of z, if z falls on the grid.
    fn locate(&self, z: &GroupPoint) -> Option<(usize, u32)> {
        let lag = (self.z0.t - z.t) / self.dt;
        if lag < -0.5 {
            return None;
        }
        let k = lag.round() as usize;
        if k >= self.layers.len() {
            return None;
        }
        Some((k, self.flat_of(z.x.as_slice())?))
    }

    pub fn contains(&self, z: &GroupPoint) -> bool {
        match self.locate(z) {
            Some((k, flat)) => self.layers[k].cells.binary_search(&flat).is_ok(),
            None => false,
        }
    }

    /// True if z's cell or one of its Chebyshev neighbours (space and
    /// time) is occupied.
    pub fn contains_near(&self, z: &GroupPoint) -> bool {
        let lag = ((self.z0.t - z.t) / self.dt).round() as i64;
        let idx: Vec<i64> = z.x.iter().zip(&self.lo).map(|(x, lo)| ((x - lo) / self.cell).floor() as i64).collect();
        let n = idx.len();
        let offsets = 3usize.pow(n as u32 + 1);
        (0..offsets).any(|code| {
            let mut c = code;
            let mut cand = Vec::with_capacity(n);
            for &i in &idx {
                cand.push(i + (c % 3) as i64 - 1);
                c /= 3;
            }
            let k = lag + c as i64 - 1;
            if k < 0 || k as usize >= self.layers.len() {
                return false;
            }
            if cand.iter().zip(&self.shape).any(|(&i, &s)| i < 0 || i as usize >= s) {
                return false;
            }
            let flat = cand.iter().zip(&self.shape).fold(0usize, |acc, (&i, &s)| acc * s + i as usize);
            self.layers[k as usize].cells.binary_search(&(flat as u32)).is_ok()
        })
    }

    pub fn cells(&self) -> Vec<GridCell> {
        let n = self.shape.len();
        let mut out = Vec::with_capacity(self.occupied());
        for (k, layer) in self.layers.iter().enumerate() {
            for (j, &flat) in layer.cells.iter().enumerate() {
                let index = self.unflatten(flat as usize);
                out.push(GridCell {
                    layer: k,
                    center: self.center(&index),
                    index,
                    t: self.layer_time(k),
                    state: layer.states[j * n..(j + 1) * n].to_vec(),
                    energy: layer.energy[j],
                });
            }
        }
        out
    }

    pub fn occupancy(&self) -> Occupancy {
        Occupancy {
            t0: self.z0.t,
            cell: self.cell,
            dt: self.dt,
            lo: self.lo.clone(),
            shape: self.shape.clone(),
            layers: self.layers.iter().map(|l| l.cells.clone()).collect(),
        }
    }
}

fn flat_index(x: &[f64], lo: &[f64], shape: &[usize], cell: f64) -> Option<u32> {
    let mut flat = 0usize;
    for ((v, l), &s) in x.iter().zip(lo).zip(shape) {
        let i = ((v - l) / cell).floor();
        if !(i >= 0.0 && (i as usize) < s) {
            return None;
        }
        flat = flat * s + i as usize;
    }
    Some(flat as u32)
}

fn inside(domain: &BoxDomain, coords: &[f64]) -> bool {
    domain.contains_coords(coords)
}

/// Lattice of control values j·step with |ω| ≤ radius, plus ±radius on each
/// axis, sorted by norm.
fn control_lattice(m: usize, step: f64, radius: f64) -> Vec<(f64, Vec<f64>)> {
    let j_max = (radius / step).floor() as i64;
    let mut out = Vec::new();
    let mut idx = vec![-j_max; m];
    loop {
        let w: Vec<f64> = idx.iter().map(|&j| j as f64 * step).collect();
        let n2: f64 = w.iter().map(|v| v * v).sum();
        if n2 <= radius * radius * (1.0 + 1e-12) {
            out.push((n2, w));
        }
        let mut k = 0;
        loop {
            if k == m {
                out.extend((0..m).flat_map(|axis| {
                    [-radius, radius].map(|r| {
                        let mut w = vec![0.0; m];
                        w[axis] = r;
                        (r * r, w)
                    })
                }));
                out.sort_by(|a, b| a.0.total_cmp(&b.0));
                out.dedup_by(|a, b| a.1 == b.1);
                return out;
            }
            idx[k] += 1;
            if idx[k] <= j_max {
                break;
            }
            idx[k] = -j_max;
            k += 1;
        }
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn mat_vec(rows: &[f64], ncols: usize, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = rows[i * ncols..(i + 1) * ncols].iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

/// Layered propagation of the attainable set of z0 in `domain`.
pub fn attainable_grid(
    spec: &OperatorSpec,
    z0: &GroupPoint,
    domain: &BoxDomain,
    class: ControlClass,
    resolution: usize,
) -> Result<AttainableGrid> {
    class.validate()?;
    domain.check_dim(spec.dim())?;
    if resolution == 0 {
        return Err(KolmoError::InvalidParameter("resolution must be positive".into()));
    }
    if z0.dim() != spec.dim() {
        return Err(KolmoError::DimensionMismatch("z0 has the wrong dimension".into()));
    }
    if !domain.contains_closed(z0) {
        return Err(KolmoError::PointOutsideDomain);
    }
    let n = spec.dim();
    let m = spec.m0();
    let cell = 1.0 / resolution as f64;
    let dt = cell;
    let hull = domain.hull();
    let lo: Vec<f64> = hull.lo[..n].to_vec();
    let shape: Vec<usize> = (0..n).map(|j| ((hull.hi[j] - hull.lo[j]) / cell).ceil() as usize).collect();
    let total: usize = shape.iter().product();
    if total > MAX_LAYER_CELLS {
        return Err(KolmoError::InvalidParameter(format!("{total} cells per layer is too many")));
    }
    let layer_count = (((z0.t - hull.lo[n]) / dt).ceil() as usize).max(1);

    let g = spec.control_matrix();
    let (p, phi) = cell_propagator(spec.b(), &g, dt)?;
    let (p_half, phi_half) = cell_propagator(spec.b(), &g, dt / 2.0)?;
    let (p, phi, p_half, phi_half) = (row_major(&p), row_major(&phi), row_major(&p_half), row_major(&phi_half));
    let phi_mat = DMatrix::from_row_slice(n, m, &phi);
    let phi_norm = phi_mat.norm();
    let step = cell / (2.0 * phi_norm);
    let diameter = (0..n).map(|j| (hull.hi[j] - hull.lo[j]).powi(2)).sum::<f64>().sqrt();
    let radius = match class {
        ControlClass::Bounded(b) => b,
        ControlClass::L2Budget(h) => (h / dt).sqrt(),
        ControlClass::Unbounded => {
            let smin = phi_mat.svd(false, false).singular_values.min();
            if !(smin > 0.0) {
                return Err(KolmoError::GramianSingular(smin));
            }
            diameter / smin
        }
    };
    let lattice = control_lattice(m, step, radius);

    let mut layers = Vec::with_capacity(layer_count);
    let start_flat = flat_index(z0.x.as_slice(), &lo, &shape, cell).ok_or(KolmoError::PointOutsideDomain)?;
    layers.push(Layer { cells: vec![start_flat], states: z0.x.as_slice().to_vec(), energy: vec![0.0] });

    let mut best = vec![f64::INFINITY; total];
    let mut best_state = vec![0.0; total * n];
    let mut touched: Vec<u32> = Vec::new();
    let mut free = vec![0.0; n];
    let mut mid_free = vec![0.0; n];
    let mut end = vec![0.0; n + 1];
    let mut mid = vec![0.0; n + 1];
    for k in 0..layer_count - 1 {
        let t_next = z0.t - (k + 1) as f64 * dt;
        let t_mid = z0.t - (k as f64 + 0.5) * dt;
        end[n] = t_next;
        mid[n] = t_mid;
        let prev = &layers[k];
        for (j, _) in prev.cells.iter().enumerate() {
            let x = &prev.states[j * n..(j + 1) * n];
            let e0 = prev.energy[j];
            mat_vec(&p, n, x, &mut free);
            mat_vec(&p_half, n, x, &mut mid_free);
            let budget = match class {
                ControlClass::L2Budget(h) => Some(h - e0),
                _ => None,
            };
            for (n2, w) in &lattice {
                let e = e0 + n2 * dt;
                if let Some(b) = budget {
                    if n2 * dt > b * (1.0 + 1e-12) {
                        break;
                    }
                }
                for i in 0..n {
                    let row = &phi[i * m..(i + 1) * m];
                    end[i] = free[i] + row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
                }
                if !inside(domain, &end) {
                    continue;
                }
                for i in 0..n {
                    let row = &phi_half[i * m..(i + 1) * m];
                    mid[i] = mid_free[i] + row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
                }
                if !inside(domain, &mid) {
                    continue;
                }
                let Some(flat) = flat_index(&end[..n], &lo, &shape, cell) else { continue };
                let f = flat as usize;
                if e < best[f] {
                    if best[f].is_infinite() {
                        touched.push(flat);
                    }
                    best[f] = e;
                    best_state[f * n..(f + 1) * n].copy_from_slice(&end[..n]);
                }
            }
        }
        touched.sort_unstable();
        let mut next = Layer::default();
        for &flat in &touched {
            let f = flat as usize;
            next.cells.push(flat);
            next.states.extend_from_slice(&best_state[f * n..(f + 1) * n]);
            next.energy.push(best[f]);
            best[f] = f64::INFINITY;
        }
        touched.clear();
        layers.push(next);
    }
    Ok(AttainableGrid { z0: z0.clone(), class, resolution, cell, dt, lo, shape, layers })
}

/// Membership of z's cell in the grid attainable set of z0.
pub fn attainable_contains(
    spec: &OperatorSpec,
    z0: &GroupPoint,
    z: &GroupPoint,
    domain: &BoxDomain,
    class: ControlClass,
    resolution: usize,
) -> Result<bool> {
    if z.dim() != spec.dim() {
        return Err(KolmoError::DimensionMismatch("z has the wrong dimension".into()));
    }
    if z != z0 && !domain.contains(z) {
        return Err(KolmoError::PointOutsideDomain);
    }
    Ok(attainable_grid(spec, z0, domain, class, resolution)?.contains(z))
}

const SAMPLE_PIECES: usize = 16;
const SAMPLE_SUBSTEPS: usize = 8;
const SAMPLE_RETRIES: usize = 100;

/// One random admissible curve in the class, cut where it first leaves
/// the domain. Returns None if it leaves before the first check point.
fn random_curve_end<R: Rng>(
    spec: &OperatorSpec,
    z0: &GroupPoint,
    domain: &BoxDomain,
    class: ControlClass,
    horizon: f64,
    diameter: f64,
    rng: &mut R,
) -> Result<Option<GroupPoint>> {
    let m = spec.m0();
    let duration = horizon * (1.0 - rng.random::<f64>());
    let mut omega: Vec<DVector<f64>> =
        (0..SAMPLE_PIECES).map(|_| DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal))).collect();
    match class {
        ControlClass::Bounded(bound) => {
            for w in &mut omega {
                let r = bound * rng.random::<f64>().powf(1.0 / m as f64);
                let nrm = w.norm();
                if nrm > 0.0 {
                    *w *= r / nrm;
                }
            }
        }
        ControlClass::Unbounded => {
            for w in &mut omega {
                *w *= diameter / duration;
            }
        }
        ControlClass::L2Budget(h) => {
            let piece = duration / SAMPLE_PIECES as f64;
            let energy: f64 = omega.iter().map(|w| w.norm_squared() * piece).sum();
            let target = h * rng.random::<f64>();
            if energy > 0.0 {
                let scale = (target / energy).sqrt();
                for w in &mut omega {
                    *w *= scale;
                }
            }
        }
    }
    let h = duration / (SAMPLE_PIECES * SAMPLE_SUBSTEPS) as f64;
    let (p, gam) = cell_propagator(spec.b(), &spec.control_matrix(), h)?;
    let mut x = z0.x.clone();
    let mut last: Option<GroupPoint> = None;
    for (i, w) in omega.iter().enumerate() {
        let push = &gam * w;
        for sub in 0..SAMPLE_SUBSTEPS {
            x = &p * &x + &push;
            let step = i * SAMPLE_SUBSTEPS + sub + 1;
            let z = GroupPoint::new(x.clone(), z0.t - step as f64 * h);
            if !domain.contains(&z) {
                return Ok(last);
            }
            last = Some(z);
        }
    }
    Ok(last)
}

/// Endpoints of n random admissible curves from z0 in the class. Curve i
/// draws from stream i of the seed; a curve that leaves the domain is cut
/// at its last interior check point.
pub fn attainable_sample(
    spec: &OperatorSpec,
    z0: &GroupPoint,
    domain: &BoxDomain,
    class: ControlClass,
    n: usize,
    seed: u64,
) -> Result<Vec<GroupPoint>> {
    class.validate()?;
    domain.check_dim(spec.dim())?;
    if !domain.contains_closed(z0) {
        return Err(KolmoError::PointOutsideDomain);
    }
    let hull = domain.hull();
    let dim = spec.dim();
    let horizon = z0.t - hull.lo[dim];
    if !(horizon > 0.0) {
        return Err(KolmoError::PointOutsideDomain);
    }
    let diameter = (0..dim).map(|j| (hull.hi[j] - hull.lo[j]).powi(2)).sum::<f64>().sqrt();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, i as u64);
            for _ in 0..SAMPLE_RETRIES {
                if let Some(z) = random_curve_end(spec, z0, domain, class, horizon, diameter, &mut rng)? {
                    return Ok(z);
                }
            }
            Err(KolmoError::DegenerateSample("every drawn curve left the domain at once".into()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HausdorffReport {
    /// Spatial axes kept; the others are projected out.
    pub axes: Vec<usize>,
    /// max over computed cells of the distance to the reference, in cells.
    pub computed_to_reference: usize,
    /// max over reference cells of the distance to the computed set.
    pub reference_to_computed: usize,
    pub distance: usize,
    pub computed_cells: usize,
    pub reference_cells: usize,
}

/// Chebyshev distance (in cells, time layers counted as cells) from every
/// grid cell to `sources`, by breadth-first search with king moves.
fn chebyshev_distances(shape: &[usize], sources: &[bool]) -> Vec<usize> {
    let total = sources.len();
    let mut dist = vec![usize::MAX; total];
    let mut queue = VecDeque::new();
    for (i, &s) in sources.iter().enumerate() {
        if s {
            dist[i] = 0;
            queue.push_back(i);
        }
    }
    let d = shape.len();
    let mut strides = vec![1usize; d];
    for j in (0..d.saturating_sub(1)).rev() {
        strides[j] = strides[j + 1] * shape[j + 1];
    }
    let neighbours = 3usize.pow(d as u32);
    let mut idx = vec![0usize; d];
    while let Some(cur) = queue.pop_front() {
        let mut rest = cur;
        for j in 0..d {
            idx[j] = rest / strides[j];
            rest %= strides[j];
        }
        'moves: for code in 0..neighbours {
            let mut c = code;
            let mut flat = 0usize;
            for j in 0..d {
                let v = idx[j] as i64 + (c % 3) as i64 - 1;
                c /= 3;
                if v < 0 || v as usize >= shape[j] {
                    continue 'moves;
                }
                flat += v as usize * strides[j];
            }
            if dist[flat] == usize::MAX {
                dist[flat] = dist[cur] + 1;
                queue.push_back(flat);
            }
        }
    }
    dist
}

/// Hausdorff distance between the grid set and the reference set
/// {(x, t) in the domain : reference(x, t)}, both sampled at cell centres
/// and time layers and projected onto `axes` × time.
pub fn hausdorff_to_reference<F>(
    grid: &AttainableGrid,
    domain: &BoxDomain,
    axes: &[usize],
    reference: F,
) -> Result<HausdorffReport>
where
    F: Fn(&[f64], f64) -> bool,
{
    let n = grid.shape.len();
    if axes.iter().any(|&a| a >= n) {
        return Err(KolmoError::InvalidParameter(format!("axes {axes:?} out of range")));
    }
    let mut pshape: Vec<usize> = axes.iter().map(|&a| grid.shape[a]).collect();
    pshape.push(grid.layer_count());
    let ptotal: usize = pshape.iter().product();
    let project = |index: &[usize], k: usize| -> usize {
        let mut flat = 0usize;
        for (j, &a) in axes.iter().enumerate() {
            flat = flat * pshape[j] + index[a];
        }
        flat * grid.layer_count() + k
    };
    let mut computed = vec![false; ptotal];
    for c in grid.cells() {
        computed[project(&c.index, c.layer)] = true;
    }
    let mut refset = vec![false; ptotal];
    let total: usize = grid.shape.iter().product();
    let mut coords = vec![0.0; n + 1];
    for k in 0..grid.layer_count() {
        let t = grid.layer_time(k);
        coords[n] = t;
        for flat in 0..total {
            let index = grid.unflatten(flat);
            let c = grid.center(&index);
            coords[..n].copy_from_slice(&c);
            if domain.contains_coords(&coords) && reference(&c, t) {
                refset[project(&index, k)] = true;
            }
        }
    }
    let to_ref = chebyshev_distances(&pshape, &refset);
    let to_comp = chebyshev_distances(&pshape, &computed);
    let directed =
        |set: &[bool], dist: &[usize]| set.iter().zip(dist).filter(|(s, _)| **s).map(|(_, d)| *d).max().unwrap_or(0);
    let a = directed(&computed, &to_ref);
    let b = directed(&refset, &to_comp);
    Ok(HausdorffReport {
        axes: axes.to_vec(),
        computed_to_reference: a,
        reference_to_computed: b,
        distance: a.max(b),
        computed_cells: computed.iter().filter(|c| **c).count(),
        reference_cells: refset.iter().filter(|c| **c).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::AxisBox;
    use crate::operator::examples::*;

    #[test]
    fn lattice_contains_zero_and_extremes() {
        let l = control_lattice(1, 0.3, 1.0);
        assert_eq!(l[0].1, vec![0.0]);
        assert!(l.iter().any(|(_, w)| w == &vec![1.0]));
        assert!(l.iter().any(|(_, w)| w == &vec![-1.0]));
        assert!(l.windows(2).all(|p| p[0].0 <= p[1].0));
        assert!(control_lattice(2, 0.5, 1.0).iter().all(|(n2, _)| *n2 <= 1.0 + 1e-12));
    }

    #[test]
    fn start_and_free_flow_are_attainable() {
        let spec = k2();
        let domain = BoxDomain::unit_box(2);
        let z0 = GroupPoint::from_slice(&[0.2, -0.3], -0.1);
        let grid = attainable_grid(&spec, &z0, &domain, ControlClass::Bounded(1.0), 16).unwrap();
        assert!(grid.contains(&z0));
        for k in 1..10 {
            let s = k as f64 / 16.0;
            let flow = GroupPoint::new(crate::kernel::propagator(&spec, -s) * &z0.x, z0.t - s);
            assert!(grid.contains(&flow), "s = {s}");
        }
        assert!(attainable_contains(&spec, &z0, &z0, &domain, ControlClass::Bounded(1.0), 16).unwrap());
    }

    #[test]
    fn later_times_are_not_attainable() {
        let spec = k2();
        let domain = BoxDomain::unit_box(2);
        let z0 = GroupPoint::from_slice(&[0.0, 0.0], -0.5);
        let grid = attainable_grid(&spec, &z0, &domain, ControlClass::Unbounded, 16).unwrap();
        assert!(!grid.contains(&GroupPoint::from_slice(&[0.0, 0.0], -0.2)));
        let outside = GroupPoint::from_slice(&[3.0, 0.0], -0.6);
        assert_eq!(
            attainable_contains(&spec, &z0, &outside, &domain, ControlClass::Unbounded, 16).unwrap_err(),
            KolmoError::PointOutsideDomain
        );
    }

    #[test]
    fn bounded_control_confines_the_first_coordinate() {
        let spec = k2();
        let domain = BoxDomain::unit_box(2);
        let grid = attainable_grid(&spec, &GroupPoint::origin(2), &domain, ControlClass::Bounded(1.0), 16).unwrap();
        for c in grid.cells() {
            assert!(c.state[0].abs() <= -c.t + 1e-12);
            assert!(c.t <= 0.0);
        }
    }

    #[test]
    fn classes_are_nested_up_to_a_cell() {
        let spec = k2();
        let domain = BoxDomain::unit_box(2);
        let z0 = GroupPoint::origin(2);
        let small = attainable_grid(&spec, &z0, &domain, ControlClass::Bounded(0.5), 16).unwrap();
        let big = attainable_grid(&spec, &z0, &domain, ControlClass::Bounded(1.0), 16).unwrap();
        let free = attainable_grid(&spec, &z0, &domain, ControlClass::Unbounded, 16).unwrap();
        for c in small.cells() {
            let z = GroupPoint::from_slice(&c.state, c.t);
            assert!(big.contains_near(&z));
            assert!(free.contains_near(&z));
        }
        assert!(small.occupied() <= big.occupied() && big.occupied() <= free.occupied());
    }

    #[test]
    fn samples_lie_in_the_grid_set() {
        let spec = k2();
        let domain = BoxDomain::unit_box(2);
        let z0 = GroupPoint::origin(2);
        let class = ControlClass::Bounded(1.0);
        let pts = attainable_sample(&spec, &z0, &domain, class, 300, 9).unwrap();
        let grid = attainable_grid(&spec, &z0, &domain, class, 32).unwrap();
        for p in &pts {
            assert!(p.t < z0.t);
            assert!(domain.contains(p));
            assert!(grid.contains_near(p), "{p:?}");
        }
        assert_eq!(pts, attainable_sample(&spec, &z0, &domain, class, 300, 9).unwrap());
    }

    #[test]
    fn smaller_domains_cut_curves_earlier() {
        let spec = k2();
        let big = BoxDomain::unit_box(2);
        let small = BoxDomain::single(AxisBox::new(vec![-0.5, -0.5, -0.6], vec![0.5, 0.5, 0.0]).unwrap());
        let z0 = GroupPoint::origin(2);
        let a = attainable_sample(&spec, &z0, &big, ControlClass::Bounded(1.0), 200, 4).unwrap();
        let b = attainable_sample(&spec, &z0, &small, ControlClass::Bounded(1.0), 200, 4).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!(q.t >= p.t);
            assert!(big.contains(q));
        }
    }

    #[test]
    fn hausdorff_of_a_set_with_itself_is_zero() {
        let spec = k2();
        let domain = BoxDomain::unit_box(2);
        let grid = attainable_grid(&spec, &GroupPoint::origin(2), &domain, ControlClass::Bounded(1.0), 16).unwrap();
        let members: std::collections::HashSet<(usize, Vec<usize>)> =
            grid.cells().into_iter().map(|c| (c.layer, c.index)).collect();
        let rep = hausdorff_to_reference(&grid, &domain, &[0, 1], |x, t| {
            let k = ((grid.z0.t - t) / grid.dt).round() as usize;
            let idx: Vec<usize> = x.iter().zip(&grid.lo).map(|(v, l)| ((v - l) / grid.cell).floor() as usize).collect();
            members.contains(&(k, idx))
        })
        .unwrap();
        // the start cell sits on the closed boundary t = 0
        assert!(rep.distance <= 1, "{rep:?}");
    }

    #[test]
    fn chebyshev_bfs() {
        let mut src = vec![false; 25];
        src[12] = true;
        let d = chebyshev_distances(&[5, 5], &src);
        assert_eq!(d[0], 2);
        assert_eq!(d[6], 1);
        assert_eq!(d[14], 2);
    }
}
