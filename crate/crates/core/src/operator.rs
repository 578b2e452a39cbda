//! Kolmogorov operators `Tr(A D²) + <Bx, D> - ∂_t` in block form.
//!
//! [`RawOperator`] is whatever the user handed us; [`OperatorSpec`] is the
//! validated pair (A, B) with its strata m₀ ≥ m₁ ≥ … ≥ m_κ. Every other
//! module consumes `OperatorSpec`, except the structural checks which must
//! also judge operators that fail validation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{KolmoError, Result};
use crate::group::GroupPoint;
use crate::linalg::{self, RANK_REL_TOL};

const SYMMETRY_TOL: f64 = 1e-12;
const SIGMA_TOL: f64 = 1e-12;

/// The on-disk operator format.
#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct OperatorFile {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<Vec<f64>>>,
    pub m: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

/// An operator before validation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawOperator {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub sigma: Option<DMatrix<f64>>,
    pub strata: Vec<usize>,
    pub lambda: Option<f64>,
}

impl RawOperator {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, strata: Vec<usize>) -> Self {
        Self { a, b, sigma: None, strata, lambda: None }
    }

    pub fn with_sigma(mut self, sigma: DMatrix<f64>) -> Self {
        self.sigma = Some(sigma);
        self
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// The diffusion matrix σ with A = ½σσᵀ: the supplied one, or √2·A^{1/2}.
    pub fn sigma_or_default(&self) -> DMatrix<f64> {
        match &self.sigma {
            Some(s) => s.clone(),
            None => linalg::sym_sqrt(&linalg::symmetrize(&self.a)) * std::f64::consts::SQRT_2,
        }
    }

    pub fn from_file(file: &OperatorFile) -> Result<Self> {
        let a = linalg::from_rows(&file.a)?;
        let b = linalg::from_rows(&file.b)?;
        let sigma = file.sigma.as_deref().map(linalg::from_rows).transpose()?;
        for (name, m) in [("A", &a), ("B", &b)] {
            if m.nrows() != file.n || m.ncols() != file.n {
                return Err(KolmoError::DimensionMismatch(format!(
                    "{name} is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols(),
                    n = file.n
                )));
            }
        }
        Ok(Self { a, b, sigma, strata: file.m.clone(), lambda: file.lambda })
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let file: OperatorFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        Self::from_file(&file).map_err(|e| e.to_string())
    }
}

/// A validated operator of the class 𝕂 in canonical block basis.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    sigma: DMatrix<f64>,
    strata: Vec<usize>,
    lambda: f64,
}

/// Index ranges of each stratum inside ℝ^N.
fn stratum_offsets(strata: &[usize]) -> Vec<usize> {
    let mut off = Vec::with_capacity(strata.len() + 1);
    let mut acc = 0;
    off.push(0);
    for m in strata {
        acc += m;
        off.push(acc);
    }
    off
}

/// Stratum index of every coordinate.
fn stratum_of(strata: &[usize]) -> Vec<usize> {
    strata.iter().enumerate().flat_map(|(j, &m)| std::iter::repeat_n(j, m)).collect()
}

fn check_strata(strata: &[usize], n: usize) -> Result<()> {
    if strata.is_empty() || strata.contains(&0) {
        return Err(KolmoError::InvalidStrata("strata sizes must be positive".into()));
    }
    if strata.iter().sum::<usize>() != n {
        return Err(KolmoError::InvalidStrata(format!("strata {strata:?} do not sum to N = {n}")));
    }
    if strata.windows(2).any(|w| w[1] > w[0]) {
        return Err(KolmoError::InvalidStrata(format!("strata {strata:?} are not non-increasing")));
    }
    Ok(())
}

/// Checks every invariant of the block form and returns the validated spec.
pub fn validate_operator(raw: &RawOperator) -> Result<OperatorSpec> {
    let n = raw.a.nrows();
    if !raw.a.is_square() || !raw.b.is_square() || raw.b.nrows() != n || n == 0 {
        return Err(KolmoError::DimensionMismatch(format!(
            "A is {}x{}, B is {}x{}",
            raw.a.nrows(),
            raw.a.ncols(),
            raw.b.nrows(),
            raw.b.ncols()
        )));
    }
    if raw.a.iter().chain(raw.b.iter()).any(|v| !v.is_finite()) {
        return Err(KolmoError::NonFinite);
    }
    check_strata(&raw.strata, n)?;
    let scale = raw.a.amax().max(1.0);
    let asym = linalg::max_abs_diff(&raw.a, &raw.a.transpose());
    if asym > SYMMETRY_TOL * scale {
        return Err(KolmoError::NotSymmetric(asym));
    }
    let m0 = raw.strata[0];
    for i in 0..n {
        for j in 0..n {
            if (i >= m0 || j >= m0) && raw.a[(i, j)] != 0.0 {
                return Err(KolmoError::InvalidStrata(format!("A has a nonzero entry ({i},{j}) outside the m0 block")));
            }
        }
    }
    let a0 = raw.a.view((0, 0), (m0, m0)).into_owned();
    let eig = nalgebra::SymmetricEigen::new(linalg::symmetrize(&a0));
    let lmin = eig.eigenvalues.min();
    let lmax = eig.eigenvalues.max();
    if lmin <= 0.0 {
        return Err(KolmoError::A0NotPositive(format!("min eigenvalue {lmin:.3e}")));
    }
    let lambda = match raw.lambda {
        Some(l) => {
            let slack = 1e-12 * l.max(1.0);
            if l <= 0.0 || lmin < 1.0 / l - slack || lmax > l + slack {
                return Err(KolmoError::A0NotPositive(format!(
                    "eigenvalues [{lmin:.3e}, {lmax:.3e}] outside [1/λ, λ] with λ = {l}"
                )));
            }
            l
        }
        None => lmax.max(1.0 / lmin),
    };
    let sigma = match &raw.sigma {
        Some(s) => {
            if s.nrows() != n {
                return Err(KolmoError::DimensionMismatch(format!("sigma has {} rows, expected {n}", s.nrows())));
            }
            let resid = linalg::max_abs_diff(&raw.a, &(s * s.transpose() * 0.5));
            if resid > SIGMA_TOL * scale {
                return Err(KolmoError::SigmaMismatch(resid));
            }
            s.clone()
        }
        None => {
            let root = linalg::sym_sqrt(&linalg::symmetrize(&a0)) * std::f64::consts::SQRT_2;
            let mut s = DMatrix::zeros(n, m0);
            s.view_mut((0, 0), (m0, m0)).copy_from(&root);
            s
        }
    };
    let off = stratum_offsets(&raw.strata);
    for j in 1..raw.strata.len() {
        let blk = raw.b.view((off[j], off[j - 1]), (raw.strata[j], raw.strata[j - 1])).into_owned();
        if linalg::rank(&blk, RANK_REL_TOL) < raw.strata[j] {
            return Err(KolmoError::BlockRankDeficient(j));
        }
    }
    let st = stratum_of(&raw.strata);
    for i in 0..n {
        for k in 0..n {
            if st[i] > st[k] + 1 && raw.b[(i, k)] != 0.0 {
                return Err(KolmoError::InvalidStrata(format!(
                    "B has a nonzero entry ({i},{k}) below the subdiagonal blocks"
                )));
            }
        }
    }
    Ok(OperatorSpec { a: raw.a.clone(), b: raw.b.clone(), sigma, strata: raw.strata.clone(), lambda })
}

impl OperatorSpec {
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }
    pub fn strata(&self) -> &[usize] {
        &self.strata
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn m0(&self) -> usize {
        self.strata[0]
    }
    pub fn trace_b(&self) -> f64 {
        self.b.trace()
    }

    /// Upper-left m₀×m₀ block of A.
    pub fn a0(&self) -> DMatrix<f64> {
        self.a.view((0, 0), (self.m0(), self.m0())).into_owned()
    }

    /// Drift directions of the vector fields X_k = σ_{·k}/√2.
    pub fn control_matrix(&self) -> DMatrix<f64> {
        &self.sigma / std::f64::consts::SQRT_2
    }

    pub fn dilations(&self) -> DilationGroup {
        dilation_exponents(self)
    }

    /// B₀: the drift with every starred block zeroed.
    pub fn principal_b(&self) -> DMatrix<f64> {
        let st = stratum_of(&self.strata);
        DMatrix::from_fn(self.dim(), self.dim(), |i, j| if st[i] == st[j] + 1 { self.b[(i, j)] } else { 0.0 })
    }

    /// The principal part operator ℒ₀ (same A, drift B₀).
    pub fn principal_part(&self) -> OperatorSpec {
        OperatorSpec { b: self.principal_b(), ..self.clone() }
    }

    pub fn is_dilation_invariant(&self) -> bool {
        linalg::max_abs_diff(&self.b, &self.principal_b()) == 0.0
    }

    /// Same operator with its drift replaced. The block structure of the
    /// new drift is revalidated.
    pub fn with_drift(&self, b: DMatrix<f64>) -> Result<OperatorSpec> {
        let raw = RawOperator {
            a: self.a.clone(),
            b,
            sigma: Some(self.sigma.clone()),
            strata: self.strata.clone(),
            lambda: Some(self.lambda),
        };
        validate_operator(&raw)
    }

    /// Same drift, diffusion block replaced by `scale · I_{m₀}`.
    pub fn with_isotropic_diffusion(&self, scale: f64) -> Result<OperatorSpec> {
        let n = self.dim();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..self.m0() {
            a[(i, i)] = scale;
        }
        validate_operator(&RawOperator::new(a, self.b.clone(), self.strata.clone()))
    }

    pub fn to_raw(&self) -> RawOperator {
        RawOperator {
            a: self.a.clone(),
            b: self.b.clone(),
            sigma: Some(self.sigma.clone()),
            strata: self.strata.clone(),
            lambda: Some(self.lambda),
        }
    }

    pub fn to_file(&self) -> OperatorFile {
        OperatorFile {
            n: self.dim(),
            a: linalg::to_rows(&self.a),
            b: linalg::to_rows(&self.b),
            sigma: Some(linalg::to_rows(&self.sigma)),
            m: self.strata.clone(),
            lambda: Some(self.lambda),
        }
    }
}

/// The anisotropic dilations D(r) = diag(r^{q_1}, …, r^{q_N}, r²).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DilationGroup {
    /// Spatial exponents 2j+1, repeated m_j times.
    pub q: Vec<u32>,
    /// Homogeneous dimension Σ (2j+1) m_j of ℝ^N.
    pub homogeneous_dim: u32,
}

pub const TIME_EXPONENT: u32 = 2;

impl DilationGroup {
    pub fn from_strata(strata: &[usize]) -> Self {
        let q: Vec<u32> = stratum_of(strata).into_iter().map(|j| 2 * j as u32 + 1).collect();
        let homogeneous_dim = q.iter().sum();
        Self { q, homogeneous_dim }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// D₀(r) as a diagonal matrix.
    pub fn spatial_matrix(&self, r: f64) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(self.dim(), self.q.iter().map(|&q| r.powi(q as i32))))
    }

    pub fn spatial(&self, x: &DVector<f64>, r: f64) -> DVector<f64> {
        DVector::from_iterator(x.len(), x.iter().zip(&self.q).map(|(v, &q)| v * r.powi(q as i32)))
    }

    /// Applies D(r) to a space-time point.
    pub fn dilate(&self, z: &GroupPoint, r: f64) -> Result<GroupPoint> {
        if !(r > 0.0) {
            return Err(KolmoError::NonPositiveRadius(r));
        }
        Ok(GroupPoint::new(self.spatial(&z.x, r), r * r * z.t))
    }
}

pub fn dilation_exponents(spec: &OperatorSpec) -> DilationGroup {
    DilationGroup::from_strata(spec.strata())
}

/// The drift of the scaled operator r² D(r) ∘ ℒ ∘ D(1/r): entry (i, j) is
/// multiplied by r^{2 + q_j - q_i}, so starred blocks vanish as r → 0 and
/// the subdiagonal blocks stay fixed.
pub fn scaled_b(b: &DMatrix<f64>, r: f64, group: &DilationGroup) -> Result<DMatrix<f64>> {
    if !(r > 0.0) {
        return Err(KolmoError::NonPositiveRadius(r));
    }
    if b.nrows() != group.dim() || b.ncols() != group.dim() {
        return Err(KolmoError::DimensionMismatch("B and dilation group differ".into()));
    }
    Ok(DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| {
        let e = 2 + group.q[j] as i32 - group.q[i] as i32;
        if b[(i, j)] == 0.0 {
            0.0
        } else {
            b[(i, j)] * r.powi(e)
        }
    }))
}

/// Test and example operators used across the crate.
pub mod examples {
    use super::*;

    /// ∂²_{x₁} + x₁∂_{x₂} - ∂_t: the two-dimensional Kolmogorov operator.
    pub fn k2() -> OperatorSpec {
        k2_with_b00(0.0)
    }

    /// K2 with the starred (1,1) drift entry set to `b00`.
    pub fn k2_with_b00(b00: f64) -> OperatorSpec {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 2, &[b00, 0.0, 1.0, 0.0]);
        validate_operator(&RawOperator::new(a, b, vec![1, 1])).expect("K2 is valid")
    }

    /// The chain ∂²_{x₁} + x₁∂_{x₂} + x₂∂_{x₃} - ∂_t.
    pub fn chain3() -> OperatorSpec {
        let mut a = DMatrix::zeros(3, 3);
        a[(0, 0)] = 1.0;
        let b = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        validate_operator(&RawOperator::new(a, b, vec![1, 1, 1])).expect("chain is valid")
    }

    /// Kinetic operator in ℝ⁴ with strata (2,2) and Q = 8.
    pub fn kinetic4() -> OperatorSpec {
        let mut a = DMatrix::zeros(4, 4);
        a[(0, 0)] = 1.0;
        a[(1, 1)] = 1.0;
        let mut b = DMatrix::zeros(4, 4);
        b[(2, 0)] = 1.0;
        b[(3, 1)] = 1.0;
        validate_operator(&RawOperator::new(a, b, vec![2, 2])).expect("kinetic is valid")
    }

    /// Strata (2,1,1), Q = 2 + 3 + 5 = 10.
    pub fn strata_211() -> OperatorSpec {
        let mut a = DMatrix::zeros(4, 4);
        a[(0, 0)] = 1.0;
        a[(1, 1)] = 2.0;
        a[(0, 1)] = 0.3;
        a[(1, 0)] = 0.3;
        let mut b = DMatrix::zeros(4, 4);
        b[(2, 0)] = 1.0;
        b[(2, 1)] = -0.5;
        b[(3, 2)] = 2.0;
        validate_operator(&RawOperator::new(a, b, vec![2, 1, 1])).expect("valid")
    }

    /// Strata (3,2), Q = 3 + 6 = 9.
    pub fn strata_32() -> OperatorSpec {
        let mut a = DMatrix::zeros(5, 5);
        for i in 0..3 {
            a[(i, i)] = 1.0;
        }
        let mut b = DMatrix::zeros(5, 5);
        b[(3, 0)] = 1.0;
        b[(4, 1)] = 1.0;
        b[(4, 2)] = 0.5;
        validate_operator(&RawOperator::new(a, b, vec![3, 2])).expect("valid")
    }

    /// Uniformly parabolic heat operator in ℝ^n.
    pub fn heat(n: usize) -> OperatorSpec {
        validate_operator(&RawOperator::new(DMatrix::identity(n, n), DMatrix::zeros(n, n), vec![n]))
            .expect("heat is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::examples::*;
    use super::*;

    fn raw_k2(b: &[f64]) -> RawOperator {
        RawOperator::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, b),
            vec![1, 1],
        )
    }

    #[test]
    fn k2_is_valid() {
        let spec = validate_operator(&raw_k2(&[0.0, 0.0, 1.0, 0.0])).unwrap();
        assert_eq!(spec.dim(), 2);
        assert_eq!(spec.lambda(), 1.0);
        // default sigma = (√2, 0)ᵀ
        assert!((spec.sigma()[(0, 0)] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(spec.sigma().ncols(), 1);
    }

    #[test]
    fn parabolic_case_is_valid() {
        let spec = heat(2);
        assert_eq!(spec.strata(), &[2]);
        assert!(spec.is_dilation_invariant());
    }

    #[test]
    fn zero_subdiagonal_block_is_rank_deficient() {
        assert_eq!(validate_operator(&raw_k2(&[0.0, 0.0, 0.0, 0.0])), Err(KolmoError::BlockRankDeficient(1)));
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut raw = raw_k2(&[0.0, 0.0, 1.0, 0.0]);
        raw.strata = vec![1, 2];
        assert!(matches!(validate_operator(&raw), Err(KolmoError::InvalidStrata(_))));

        let raw = RawOperator::new(DMatrix::identity(2, 2), DMatrix::zeros(3, 3), vec![2]);
        assert!(matches!(validate_operator(&raw), Err(KolmoError::DimensionMismatch(_))));

        let raw = RawOperator::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]), DMatrix::zeros(2, 2), vec![2]);
        assert!(matches!(validate_operator(&raw), Err(KolmoError::NotSymmetric(_))));

        let raw =
            RawOperator::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]), DMatrix::zeros(2, 2), vec![2]);
        assert!(matches!(validate_operator(&raw), Err(KolmoError::A0NotPositive(_))));

        let mut raw = raw_k2(&[0.0, 0.0, 1.0, 0.0]);
        raw.lambda = Some(0.5);
        assert!(matches!(validate_operator(&raw), Err(KolmoError::A0NotPositive(_))));

        let raw = raw_k2(&[0.0, 0.0, 1.0, 0.0]).with_sigma(DMatrix::from_row_slice(2, 1, &[1.0, 0.0]));
        assert!(matches!(validate_operator(&raw), Err(KolmoError::SigmaMismatch(_))));
    }

    #[test]
    fn lambda_defaults_to_conditioning_of_a0() {
        let raw = RawOperator::new(DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 0.5]), DMatrix::zeros(2, 2), vec![2]);
        assert_eq!(validate_operator(&raw).unwrap().lambda(), 4.0);
    }

    #[test]
    fn exponents_and_homogeneous_dimension() {
        let g = k2().dilations();
        assert_eq!(g.q, vec![1, 3]);
        assert_eq!(g.homogeneous_dim, 4);
        assert_eq!(chain3().dilations().q, vec![1, 3, 5]);
        let h = heat(2).dilations();
        assert_eq!((h.q.clone(), h.homogeneous_dim), (vec![1, 1], 2));
        assert_eq!(strata_32().dilations().homogeneous_dim, 9);
    }

    #[test]
    fn dilate_examples() {
        let g = k2().dilations();
        let z = GroupPoint::new(DVector::from_vec(vec![1.0, 1.0]), 1.0);
        let d = g.dilate(&z, 2.0).unwrap();
        assert_eq!(d.x.as_slice(), &[2.0, 8.0]);
        assert_eq!(d.t, 4.0);
        assert_eq!(g.dilate(&z, 1.0).unwrap(), z);
        assert_eq!(g.dilate(&GroupPoint::origin(2), 3.0).unwrap(), GroupPoint::origin(2));
        assert_eq!(g.dilate(&z, 0.0), Err(KolmoError::NonPositiveRadius(0.0)));
    }

    #[test]
    fn scaled_drift_examples() {
        let spec = k2_with_b00(0.7);
        let g = spec.dilations();
        let br = scaled_b(spec.b(), 0.1, &g).unwrap();
        assert!((br[(0, 0)] - 0.01 * 0.7).abs() < 1e-15);
        assert_eq!(br[(1, 0)], 1.0);
        assert_eq!(scaled_b(spec.b(), 1.0, &g).unwrap(), *spec.b());
        let b0 = k2().b().clone();
        for r in [1e-3, 0.5, 7.0] {
            assert_eq!(scaled_b(&b0, r, &g).unwrap(), b0);
        }
        assert!(scaled_b(&b0, -1.0, &g).is_err());
    }

    #[test]
    fn principal_part_keeps_only_subdiagonal_blocks() {
        let spec = k2_with_b00(0.3);
        assert!(!spec.is_dilation_invariant());
        assert_eq!(spec.principal_b(), *k2().b());
        assert!(spec.principal_part().is_dilation_invariant());
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"N":2,"A":[[1,0],[0,0]],"B":[[0,0],[1,0]],"m":[1,1]}"#;
        let raw = RawOperator::from_json(text).unwrap();
        let spec = validate_operator(&raw).unwrap();
        assert_eq!(spec, k2());
        let back = serde_json::to_string(&spec.to_file()).unwrap();
        let again = validate_operator(&RawOperator::from_json(&back).unwrap()).unwrap();
        assert_eq!(again, spec);
        assert!(RawOperator::from_json(r#"{"N":2,"A":[[1,0],[0,0]],"m":[1,1]}"#).is_err());
    }
}
