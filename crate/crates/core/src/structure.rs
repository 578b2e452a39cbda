//! Hypoellipticity tests and the pointwise boundary classifier.
//!
//! The four rank-type conditions are computed by independent routes so
//! that their agreement is a real cross-check: bracket closure by
//! Gram–Schmidt, the Kalman stack by SVD, the largest invariant subspace
//! of Ker A by iterated null spaces, and the spectrum of C(t).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{KolmoError, Result};
use crate::linalg::{self, RANK_REL_TOL};
use crate::operator::{validate_operator, OperatorSpec, RawOperator};

pub const DEFAULT_GRAMIAN_TOL: f64 = 1e-10;
pub const FICHERA_TOL: f64 = 1e-10;
const BRACKET_TOL: f64 = 1e-10;

fn check_pair(sigma: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if !b.is_square() || sigma.nrows() != b.nrows() {
        return Err(KolmoError::DimensionMismatch(format!(
            "sigma is {}x{}, B is {}x{}",
            sigma.nrows(),
            sigma.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(())
}

/// Rank of [σ | Bσ | … | B^{N−1}σ] and whether it equals N.
pub fn kalman_rank(sigma: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(usize, bool)> {
    check_pair(sigma, b)?;
    let n = b.nrows();
    let m = sigma.ncols();
    let mut stack = DMatrix::zeros(n, n * m);
    let mut block = sigma.clone();
    for i in 0..n {
        stack.view_mut((0, i * m), (n, m)).copy_from(&block);
        block = b * block;
    }
    let r = linalg::rank(&stack, RANK_REL_TOL);
    Ok((r, r == n))
}

/// Dimension of the Lie algebra generated by X_k = σ_{·k}/√2 and
/// Y = ⟨Bx, D⟩ − ∂_t at any point.
///
/// The X_k are constant and Y is linear, so [X, Y] is the constant field BX
/// and the algebra is span{B^i X_k} plus the ∂_t direction carried by Y.
/// The span is closed under B one bracket layer at a time.
pub fn hormander_bracket_rank(sigma: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(bool, usize)> {
    check_pair(sigma, b)?;
    let n = b.nrows();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let absorb = |v: DVector<f64>, basis: &mut Vec<DVector<f64>>| -> bool {
        let scale = v.norm();
        if scale == 0.0 {
            return false;
        }
        let mut r = v;
        for _ in 0..2 {
            for q in basis.iter() {
                let c = q.dot(&r);
                r -= q * c;
            }
        }
        if r.norm() > BRACKET_TOL * scale {
            let nr = r.norm();
            basis.push(r / nr);
            true
        } else {
            false
        }
    };
    let mut layer: Vec<DVector<f64>> = Vec::new();
    for k in 0..sigma.ncols() {
        let x = sigma.column(k) / std::f64::consts::SQRT_2;
        if absorb(x.clone(), &mut basis) {
            layer.push(x);
        }
    }
    while !layer.is_empty() && basis.len() < n {
        let mut next = Vec::new();
        for x in &layer {
            let bracket = b * x;
            if absorb(bracket.clone(), &mut basis) {
                next.push(bracket);
            }
        }
        layer = next;
    }
    let dim = basis.len() + 1;
    Ok((dim == n + 1, dim))
}

/// True when Ker A contains no non-trivial subspace invariant under the
/// transpose of the drift matrix (the drift field is x ↦ Bx, so the dual
/// action on Ker A is through Bᵀ).
///
/// V₀ = Ker A, V_{k+1} = {v ∈ V_k : Bᵀv ∈ V_k}, iterated to a fixed point.
pub fn invariant_subspace_check(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    let bt = b.transpose();
    let scale = bt.norm().max(1.0);
    let mut v = linalg::null_space(a, RANK_REL_TOL, None);
    for _ in 0..=n {
        let dim = v.ncols();
        if dim == 0 {
            return true;
        }
        let proj = DMatrix::<f64>::identity(n, n) - &v * v.transpose();
        let leak = proj * &bt * &v;
        let keep = linalg::null_space(&leak, RANK_REL_TOL, Some(scale));
        if keep.ncols() == dim {
            return false;
        }
        // orthonormal columns times orthonormal columns stay orthonormal
        v = &v * keep;
    }
    v.ncols() == 0
}

/// Smallest eigenvalue of C(t) for raw matrices, and whether C(t) is
/// positive definite.
///
/// The verdict uses the square-root factor [E(s_k) A^{1/2}]_k sampled at
/// midpoints of [0, t]: it has full rank iff C(t) does, and its singular
/// values resolve eigenvalues of C down to ε²‖C‖ instead of ε‖C‖. `tol`
/// bounds σ_min/σ_max of that factor.
pub fn gramian_positivity(raw: &RawOperator, t: f64, tol: f64) -> Result<(bool, f64)> {
    if !(t > 0.0) {
        return Err(KolmoError::NonPositiveTime(t));
    }
    let n = raw.a.nrows();
    let (_, c) = linalg::exp_and_gramian(&(-&raw.b), &raw.a, t)?;
    let min_eig = linalg::min_eigenvalue(&c);
    let root = linalg::sym_sqrt(&linalg::symmetrize(&raw.a));
    let samples = (4 * n).max(32);
    let h = t / samples as f64;
    let step = linalg::expm(&(-&raw.b * h))?;
    let mut e = linalg::expm(&(-&raw.b * (0.5 * h)))?;
    let mut factor = DMatrix::zeros(n, n * samples);
    for k in 0..samples {
        factor.view_mut((0, k * n), (n, n)).copy_from(&(&e * &root));
        e = &step * e;
    }
    let sv = factor.svd(false, false).singular_values;
    let (lo, hi) = (sv.min(), sv.max());
    Ok((hi > 0.0 && lo > tol * hi, min_eig))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// Hörmander bracket condition.
    pub c1: bool,
    pub bracket_dimension: usize,
    /// No invariant subspace inside Ker A.
    pub c2: bool,
    /// C(1) positive definite.
    pub c3: bool,
    pub min_eigenvalue: f64,
    /// Kalman rank condition.
    pub c4: bool,
    pub kalman_rank: usize,
    /// Valid block form in the given basis.
    pub c5: bool,
    pub consistent: bool,
}

impl ConditionReport {
    pub fn hypoelliptic(&self) -> bool {
        self.consistent && self.c1 && self.c2 && self.c3 && self.c4
    }
}

/// Runs all five conditions. Inconsistency is reported, not raised.
pub fn check_all(raw: &RawOperator) -> ConditionReport {
    let sigma = raw.sigma_or_default();
    let (c1, bracket_dimension) = hormander_bracket_rank(&sigma, &raw.b).unwrap_or((false, 0));
    let c2 = invariant_subspace_check(&raw.a, &raw.b);
    let (c3, min_eigenvalue) = gramian_positivity(raw, 1.0, DEFAULT_GRAMIAN_TOL).unwrap_or((false, f64::NAN));
    let (kalman, c4) = kalman_rank(&sigma, &raw.b).unwrap_or((0, false));
    let c5 = validate_operator(raw).is_ok();
    let consistent = c1 == c2 && c2 == c3 && c3 == c4 && (!c5 || c1);
    ConditionReport { c1, bracket_dimension, c2, c3, min_eigenvalue, c4, kalman_rank: kalman, c5, consistent }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryVerdict {
    Barrier,
    NonRegular,
    Undetermined,
}

/// Fichera-type verdict at a boundary point z₀ with outer normal ν ∈ ℝ^{N+1}.
/// ν is normalized first, so the verdict ignores positive rescaling.
pub fn fichera_classify(
    spec: &OperatorSpec,
    x0: &DVector<f64>,
    nu: &DVector<f64>,
    tol: f64,
) -> Result<BoundaryVerdict> {
    let n = spec.dim();
    if nu.len() != n + 1 || x0.len() != n {
        return Err(KolmoError::DimensionMismatch("normal must live in R^(N+1)".into()));
    }
    let norm = nu.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(KolmoError::ZeroNormal);
    }
    let nu = nu / norm;
    let nu_x = nu.rows(0, n).into_owned();
    let nu_t = nu[n];
    if (spec.a() * &nu_x).dot(&nu_x) > tol {
        return Ok(BoundaryVerdict::Barrier);
    }
    let drift = (spec.b() * x0).dot(&nu_x) - nu_t;
    Ok(if drift > tol {
        BoundaryVerdict::Barrier
    } else if drift < -tol {
        BoundaryVerdict::NonRegular
    } else {
        BoundaryVerdict::Undetermined
    })
}
