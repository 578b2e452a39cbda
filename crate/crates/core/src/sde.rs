//! The linear SDE dX = −BX dt + σ dW: exact Gaussian sampling,
//! Euler–Maruyama, and moment diagnostics against E(t)x₀ and 2C(t).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{KolmoError, Result};
use crate::linalg;
use crate::operator::{OperatorSpec, RawOperator};
use crate::rng;

/// Drift and noise matrices of the SDE. Built from a validated operator or
/// from raw matrices, so degenerate systems can be simulated too.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSde {
    pub b: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
}

impl From<&OperatorSpec> for LinearSde {
    fn from(spec: &OperatorSpec) -> Self {
        Self { b: spec.b().clone(), sigma: spec.sigma().clone() }
    }
}

impl From<&RawOperator> for LinearSde {
    fn from(raw: &RawOperator) -> Self {
        Self { b: raw.b.clone(), sigma: raw.sigma_or_default() }
    }
}

impl LinearSde {
    pub fn new(b: DMatrix<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        if !b.is_square() || sigma.nrows() != b.nrows() {
            return Err(KolmoError::DimensionMismatch("sigma rows must match B".into()));
        }
        Ok(Self { b, sigma })
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    /// (E(t), 2C(t)) where 2C(t) = ∫₀ᵗ E(s)σσᵀE(s)ᵀ ds.
    pub fn moments(&self, t: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let noise = &self.sigma * self.sigma.transpose();
        linalg::exp_and_gramian(&(-&self.b), &noise, t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Method {
    Exact,
    EulerMaruyama { dt: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub t: f64,
    pub x0: DVector<f64>,
    /// One sample per row.
    pub points: DMatrix<f64>,
    pub method: Method,
    pub seed: u64,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }
}

/// Symmetric factor L with L Lᵀ = cov; eigenvalues above −1e−12·trace are
/// clamped at zero.
fn covariance_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(linalg::symmetrize(cov));
    let floor = -1e-12 * cov.trace().abs().max(f64::MIN_POSITIVE);
    if let Some(bad) = eig.eigenvalues.iter().find(|l| **l < floor) {
        return Err(KolmoError::GramianSingular(*bad));
    }
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose())
}

fn check_count(n: usize) -> Result<()> {
    if n < 2 {
        return Err(KolmoError::BadSampleCount(n));
    }
    Ok(())
}

fn normal_vector<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Advances every row of `starts` by time t with the exact transition law.
pub fn advance_exact(sde: &LinearSde, starts: &DMatrix<f64>, t: f64, seed: u64) -> Result<DMatrix<f64>> {
    if !(t > 0.0) {
        return Err(KolmoError::NonPositiveTime(t));
    }
    let n = sde.dim();
    let (e, cov) = sde.moments(t)?;
    let l = covariance_factor(&cov)?;
    let rows = starts.nrows();
    let mut out = DMatrix::zeros(rows, n);
    let blocks: Vec<(usize, DMatrix<f64>)> = rng::chunks(rows)
        .into_par_iter()
        .enumerate()
        .map(|(k, range)| {
            let mut rng = rng::stream(seed, k as u64);
            let mut block = DMatrix::zeros(range.len(), n);
            for (i, row) in range.clone().enumerate() {
                let x0 = starts.row(row).transpose();
                let x = &e * x0 + &l * normal_vector(&mut rng, n);
                block.set_row(i, &x.transpose());
            }
            (range.start, block)
        })
        .collect();
    for (start, block) in blocks {
        out.view_mut((start, 0), (block.nrows(), n)).copy_from(&block);
    }
    Ok(out)
}

/// n draws from N(E(t)x₀, 2C(t)).
pub fn sample_exact(sde: &LinearSde, x0: &DVector<f64>, t: f64, n: usize, seed: u64) -> Result<SampleBatch> {
    check_count(n)?;
    if x0.len() != sde.dim() {
        return Err(KolmoError::DimensionMismatch("x0 has the wrong length".into()));
    }
    let starts = DMatrix::from_fn(n, sde.dim(), |_, j| x0[j]);
    Ok(SampleBatch { t, x0: x0.clone(), points: advance_exact(sde, &starts, t, seed)?, method: Method::Exact, seed })
}

fn step_plan(t: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt <= t * (1.0 + 1e-12)) || !t.is_finite() {
        return Err(KolmoError::BadStep(format!("need 0 < dt <= t, got dt = {dt}, t = {t}")));
    }
    let steps = ((t / dt) - 1e-9).ceil().max(1.0) as usize;
    let mut plan = vec![dt; steps];
    plan[steps - 1] = t - dt * (steps - 1) as f64;
    Ok(plan)
}

/// Explicit Euler–Maruyama: X ← X − BX h + σ √h ξ.
pub fn euler_maruyama(sde: &LinearSde, x0: &DVector<f64>, t: f64, dt: f64, n: usize, seed: u64) -> Result<SampleBatch> {
    check_count(n)?;
    let plan = step_plan(t, dt)?;
    let dim = sde.dim();
    let m = sde.sigma.ncols();
    let blocks: Vec<(usize, DMatrix<f64>)> = rng::chunks(n)
        .into_par_iter()
        .enumerate()
        .map(|(k, range)| {
            let mut rng = rng::stream(seed, k as u64);
            let mut block = DMatrix::zeros(range.len(), dim);
            for i in 0..range.len() {
                let mut x = x0.clone();
                for &h in &plan {
                    let noise = &sde.sigma * normal_vector(&mut rng, m) * h.sqrt();
                    x = &x - &sde.b * &x * h + noise;
                }
                block.set_row(i, &x.transpose());
            }
            (range.start, block)
        })
        .collect();
    let mut points = DMatrix::zeros(n, dim);
    for (start, block) in blocks {
        points.view_mut((start, 0), (block.nrows(), dim)).copy_from(&block);
    }
    Ok(SampleBatch { t, x0: x0.clone(), points, method: Method::EulerMaruyama { dt }, seed })
}

/// Euler–Maruyama at several step counts driven by the same Brownian
/// paths: increments are drawn at the finest level and summed for the
/// coarser ones. Every count must divide the largest.
pub fn euler_maruyama_coupled(
    sde: &LinearSde,
    x0: &DVector<f64>,
    t: f64,
    step_counts: &[usize],
    n: usize,
    seed: u64,
) -> Result<Vec<SampleBatch>> {
    check_count(n)?;
    let finest = *step_counts.iter().max().ok_or_else(|| KolmoError::BadStep("no levels".into()))?;
    if step_counts.iter().any(|&s| s == 0 || finest % s != 0) || !(t > 0.0) {
        return Err(KolmoError::BadStep(format!("step counts {step_counts:?} must divide {finest}")));
    }
    let dim = sde.dim();
    let m = sde.sigma.ncols();
    let levels = step_counts.len();
    let blocks: Vec<(usize, Vec<DMatrix<f64>>)> = rng::chunks(n)
        .into_par_iter()
        .enumerate()
        .map(|(k, range)| {
            let mut rng = rng::stream(seed, k as u64);
            let mut out = vec![DMatrix::zeros(range.len(), dim); levels];
            let h_fine = t / finest as f64;
            for i in 0..range.len() {
                let mut xs = vec![x0.clone(); levels];
                let mut acc = vec![DVector::zeros(m); levels];
                for step in 1..=finest {
                    let dw = normal_vector(&mut rng, m) * h_fine.sqrt();
                    for (l, &count) in step_counts.iter().enumerate() {
                        acc[l] += &dw;
                        let ratio = finest / count;
                        if step % ratio == 0 {
                            let h = t / count as f64;
                            xs[l] = &xs[l] - &sde.b * &xs[l] * h + &sde.sigma * &acc[l];
                            acc[l].fill(0.0);
                        }
                    }
                }
                for l in 0..levels {
                    out[l].set_row(i, &xs[l].transpose());
                }
            }
            (range.start, out)
        })
        .collect();
    let mut batches: Vec<SampleBatch> = step_counts
        .iter()
        .map(|&c| SampleBatch {
            t,
            x0: x0.clone(),
            points: DMatrix::zeros(n, dim),
            method: Method::EulerMaruyama { dt: t / c as f64 },
            seed,
        })
        .collect();
    for (start, outs) in blocks {
        for (l, block) in outs.into_iter().enumerate() {
            batches[l].points.view_mut((start, 0), (block.nrows(), dim)).copy_from(&block);
        }
    }
    Ok(batches)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub mean: Vec<f64>,
    pub expected_mean: Vec<f64>,
    /// max_j |mean_j − expected_j|.
    pub mean_err: f64,
    /// max_j of the same difference in standard errors.
    pub mean_z: f64,
    pub covariance: Vec<Vec<f64>>,
    pub expected_covariance: Vec<Vec<f64>>,
    /// ‖Σ̂ − 2C‖_F / ‖2C‖_F.
    pub cov_err: f64,
    /// max_ij |Σ̂_ij − 2C_ij| in standard errors of the entry.
    pub cov_z: f64,
    /// Per whitened coordinate in the range of 2C.
    pub skewness: Vec<f64>,
    pub kurtosis: Vec<f64>,
}

pub fn sample_mean_and_covariance(points: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = points.nrows() as f64;
    let mean = points.row_mean().transpose();
    let centred = DMatrix::from_fn(points.nrows(), points.ncols(), |i, j| points[(i, j)] - mean[j]);
    let cov = centred.transpose() * &centred / (n - 1.0);
    (mean, cov)
}

/// Sample moments against E(t)x₀ and 2C(t), plus per-coordinate skewness
/// and kurtosis of the whitened sample.
pub fn moment_check(batch: &SampleBatch, sde: &LinearSde) -> Result<MomentReport> {
    check_count(batch.len())?;
    let n = batch.len() as f64;
    let (e, w) = sde.moments(batch.t)?;
    let expected = &e * &batch.x0;
    let (mean, cov) = sample_mean_and_covariance(&batch.points);
    let dim = sde.dim();
    let mut mean_err = 0.0f64;
    let mut mean_z = 0.0f64;
    for j in 0..dim {
        let d = (mean[j] - expected[j]).abs();
        mean_err = mean_err.max(d);
        let se = (w[(j, j)] / n).sqrt();
        mean_z = mean_z.max(if se > 0.0 {
            d / se
        } else if d > 0.0 {
            f64::INFINITY
        } else {
            0.0
        });
    }
    let mut cov_z = 0.0f64;
    for i in 0..dim {
        for j in 0..dim {
            let d = (cov[(i, j)] - w[(i, j)]).abs();
            let se = ((w[(i, i)] * w[(j, j)] + w[(i, j)].powi(2)) / n).sqrt();
            cov_z = cov_z.max(if se > 0.0 {
                d / se
            } else if d > 0.0 {
                f64::INFINITY
            } else {
                0.0
            });
        }
    }
    let wn = w.norm();
    let cov_err = if wn > 0.0 { (&cov - &w).norm() / wn } else { cov.norm() };

    let eig = SymmetricEigen::new(linalg::symmetrize(&w));
    let top = eig.eigenvalues.amax();
    let mut skewness = Vec::new();
    let mut kurtosis = Vec::new();
    for k in 0..dim {
        let l = eig.eigenvalues[k];
        if !(l > 1e-12 * top) {
            continue;
        }
        let dir = eig.eigenvectors.column(k) / l.sqrt();
        let (mut m3, mut m4) = (0.0, 0.0);
        for row in batch.points.row_iter() {
            let y = (row.transpose() - &expected).dot(&dir);
            m3 += y.powi(3);
            m4 += y.powi(4);
        }
        skewness.push(m3 / n);
        kurtosis.push(m4 / n);
    }
    Ok(MomentReport {
        mean: mean.iter().cloned().collect(),
        expected_mean: expected.iter().cloned().collect(),
        mean_err,
        mean_z,
        covariance: linalg::to_rows(&cov),
        expected_covariance: linalg::to_rows(&w),
        cov_err,
        cov_z,
        skewness,
        kurtosis,
    })
}
