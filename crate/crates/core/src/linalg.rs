//! Dense linear-algebra helpers shared by every module: the matrix
//! exponential, numerical rank and null spaces, symmetric square roots.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{KolmoError, Result};

/// Singular values above `RANK_REL_TOL * s_max` count toward the rank.
pub const RANK_REL_TOL: f64 = 1e-10;

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] =
    [17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0, 2162160.0, 110880.0, 3960.0, 90.0, 1.0];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [f64; 5] =
    [1.495585217958292e-2, 2.53939833006323e-1, 9.504178996162932e-1, 2.097847961257068e0, 5.371920351148152e0];

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Exact exponential of a nilpotent matrix, if `m^k` vanishes identically
/// for some `k <= n`. Block-subdiagonal drifts hit this path.
fn nilpotent_exp(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    let mut acc = DMatrix::identity(n, n);
    let mut power = DMatrix::identity(n, n);
    let mut fact = 1.0;
    for k in 1..=n {
        power = &power * m;
        if power.iter().all(|v| *v == 0.0) {
            return Some(acc);
        }
        fact *= k as f64;
        acc += &power / fact;
    }
    None
}

fn pade_low(m: &DMatrix<f64>, coeffs: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let m2 = m * m;
    let mut even = DMatrix::identity(n, n) * coeffs[0];
    let mut odd = DMatrix::identity(n, n) * coeffs[1];
    let mut p = DMatrix::identity(n, n);
    for j in 1..coeffs.len() / 2 {
        p = &p * &m2;
        even += &p * coeffs[2 * j];
        odd += &p * coeffs[2 * j + 1];
    }
    (m * odd, even)
}

fn pade13(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let b = &PADE13;
    let id = DMatrix::identity(n, n);
    let m2 = m * m;
    let m4 = &m2 * &m2;
    let m6 = &m4 * &m2;
    let inner_u = &m6 * (&m6 * b[13] + &m4 * b[11] + &m2 * b[9]);
    let u = m * (inner_u + &m6 * b[7] + &m4 * b[5] + &m2 * b[3] + &id * b[1]);
    let inner_v = &m6 * (&m6 * b[12] + &m4 * b[10] + &m2 * b[8]);
    let v = inner_v + &m6 * b[6] + &m4 * b[4] + &m2 * b[2] + &id * b[0];
    (u, v)
}

/// Matrix exponential by scaling and squaring with a Padé approximant
/// (orders 3..13 picked from the 1-norm). Nilpotent inputs return the
/// terminating Taylor polynomial.
pub fn expm(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(KolmoError::DimensionMismatch(format!("expm of a {}x{} matrix", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(KolmoError::NonFinite);
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(m.clone());
    }
    if let Some(e) = nilpotent_exp(m) {
        return Ok(e);
    }
    let nrm = norm1(m);
    let low: [&[f64]; 4] = [&PADE3, &PADE5, &PADE7, &PADE9];
    let mut scaled = m.clone();
    let mut squarings = 0;
    let (u, v) = if let Some(idx) = THETA[..4].iter().position(|&th| nrm <= th) {
        pade_low(m, low[idx])
    } else {
        if nrm > THETA[4] {
            squarings = (nrm / THETA[4]).log2().ceil().max(0.0) as i32;
            scaled = m / 2f64.powi(squarings);
        }
        pade13(&scaled)
    };
    let num = &v + &u;
    let den = &v - &u;
    let mut r =
        den.lu().solve(&num).ok_or_else(|| KolmoError::DimensionMismatch("singular Padé denominator".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(KolmoError::NonFinite);
    }
    Ok(r)
}

/// Returns (e^{Ft}, ∫₀ᵗ e^{Fu} Q e^{Fᵀu} du) from one exponential of the
/// block matrix [[F, Q], [0, −Fᵀ]]·t.
pub fn exp_and_gramian(f: &DMatrix<f64>, q: &DMatrix<f64>, t: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = f.nrows();
    if !f.is_square() || q.shape() != (n, n) {
        return Err(KolmoError::DimensionMismatch("Gramian blocks differ in size".into()));
    }
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&(f * t));
    h.view_mut((0, n), (n, n)).copy_from(&(q * t));
    h.view_mut((n, n), (n, n)).copy_from(&(-f.transpose() * t));
    let big = expm(&h)?;
    let e = big.view((0, 0), (n, n)).into_owned();
    let top_right = big.view((0, n), (n, n)).into_owned();
    let w = symmetrize(&(top_right * e.transpose()));
    Ok((e, w))
}

/// SVD of `m` padded with zero rows to at least square, so that V is the
/// full c×c factor. Zero rows leave the null space unchanged.
fn padded_svd(m: &DMatrix<f64>) -> nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn> {
    let (r, c) = m.shape();
    let mut sq = DMatrix::zeros(r.max(c), c);
    sq.view_mut((0, 0), (r, c)).copy_from(m);
    sq.svd(true, true)
}

/// Numerical rank with the relative singular-value threshold.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rel_tol * smax).count()
}

/// Orthonormal basis (as columns) of the null space of `m`.
///
/// `scale` sets the magnitude singular values are compared against; pass
/// `None` to use the largest singular value of `m` itself.
pub fn null_space(m: &DMatrix<f64>, rel_tol: f64, scale: Option<f64>) -> DMatrix<f64> {
    let c = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::identity(c, c);
    }
    let svd = padded_svd(m);
    let v_t = svd.v_t.expect("requested V^T");
    let smax = scale.unwrap_or_else(|| svd.singular_values.iter().cloned().fold(0.0, f64::max));
    let cols: Vec<DVector<f64>> = (0..v_t.nrows())
        .filter(|&i| svd.singular_values[i] <= rel_tol * smax || smax == 0.0)
        .map(|i| v_t.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(c, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Symmetric square root of a symmetric PSD matrix; eigenvalues are clamped
/// at zero.
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).iter().map(|v| v.abs()).fold(0.0, f64::max)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Row-major nested vectors, as used by the JSON formats.
pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if rows.iter().any(|row| row.len() != c) {
        return Err(KolmoError::DimensionMismatch("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn taylor(m: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
        let n = m.nrows();
        let mut acc = DMatrix::identity(n, n);
        let mut p = DMatrix::identity(n, n);
        for k in 1..terms {
            p = &p * m / k as f64;
            acc += &p;
        }
        acc
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let z = DMatrix::zeros(3, 3);
        assert_eq!(expm(&z).unwrap(), DMatrix::identity(3, 3));
    }

    #[test]
    fn exp_of_nilpotent_k2_drift() {
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let e = expm(&(-&b)).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 1.0]);
        assert!(max_abs_diff(&e, &expected) <= 1e-14);
    }

    #[test]
    fn exp_of_diagonal() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![-3.0, 0.5, 7.0]));
        let e = expm(&d).unwrap();
        for (i, a) in [-3.0f64, 0.5, 7.0].iter().enumerate() {
            assert!((e[(i, i)] - a.exp()).abs() <= 1e-13 * a.exp());
        }
    }

    #[test]
    fn exp_matches_long_taylor_series() {
        // covers every Padé order plus the squaring branch
        for scale in [0.01, 0.2, 0.9, 2.0, 4.0, 12.0] {
            let m = DMatrix::from_row_slice(3, 3, &[0.3, -1.0, 0.2, 0.5, -0.4, 1.1, -0.7, 0.25, 0.1]) * scale;
            let e = expm(&m).unwrap();
            let t = taylor(&m, 200);
            let rel = max_abs_diff(&e, &t) / t.norm();
            assert!(rel < 1e-12, "scale {scale}: rel {rel}");
        }
    }

    #[test]
    fn exp_rejects_non_finite() {
        let m = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert_eq!(expm(&m), Err(KolmoError::NonFinite));
    }

    #[test]
    fn block_gramian_of_k2() {
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let (e, c) = exp_and_gramian(&(-&b), &a, 1.0).unwrap();
        assert!(max_abs_diff(&e, &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 1.0])) < 1e-15);
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0 / 3.0]);
        assert!(max_abs_diff(&c, &expected) < 1e-15);
    }

    #[test]
    fn rank_and_null_space() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert_eq!(rank(&m, RANK_REL_TOL), 1);
        let ns = null_space(&m, RANK_REL_TOL, None);
        assert_eq!(ns.ncols(), 2);
        assert!((&m * &ns).norm() < 1e-12);
        let tall = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        assert_eq!(null_space(&tall, RANK_REL_TOL, None).ncols(), 0);
        let zero_col = DMatrix::from_row_slice(2, 1, &[0.0, 0.0]);
        assert_eq!(null_space(&zero_col, RANK_REL_TOL, None).ncols(), 1);
    }

    #[test]
    fn sqrt_squares_back() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let s = sym_sqrt(&a);
        assert!(max_abs_diff(&(&s * &s), &a) < 1e-14);
    }
}
