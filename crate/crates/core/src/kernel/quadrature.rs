//! Gauss–Hermite rules and adaptive Simpson integration.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub const DEFAULT_HERMITE_NODES: usize = 64;
pub const DEFAULT_SIMPSON_TOL: f64 = 1e-10;
const MAX_DEPTH: u32 = 48;

/// Nodes and weights of the n-point rule for ∫ f(y) e^{−y²} dy
/// (Golub–Welsch on the Hermite Jacobi matrix).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "at least one node");
    let jac =
        DMatrix::from_fn(n, n, |i, j| if i + 1 == j || j + 1 == i { (i.max(j) as f64 / 2.0).sqrt() } else { 0.0 });
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> =
        (0..n).map(|k| (eig.eigenvalues[k], std::f64::consts::PI.sqrt() * eig.eigenvectors[(0, k)].powi(2))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Expectation of g(Y) for Y ~ N(mean, cov) by a tensor Gauss–Hermite rule
/// with `nodes` points per axis. `cov` may be singular.
pub fn gaussian_expectation<F>(mean: &DVector<f64>, cov: &DMatrix<f64>, nodes: usize, mut g: F) -> f64
where
    F: FnMut(&DVector<f64>) -> f64,
{
    let n = mean.len();
    let (y, w) = gauss_hermite(nodes);
    // Y = mean + √2 L u with L Lᵀ = cov, u integrated against e^{−|u|²}/π^{n/2}
    let l = crate::linalg::sym_sqrt(cov) * std::f64::consts::SQRT_2;
    let norm = std::f64::consts::PI.powf(-(n as f64) / 2.0);
    let mut idx = vec![0usize; n];
    let mut total = 0.0;
    let mut u = DVector::zeros(n);
    loop {
        let mut weight = norm;
        for (k, &i) in idx.iter().enumerate() {
            u[k] = y[i];
            weight *= w[i];
        }
        total += weight * g(&(mean + &l * &u));
        let mut k = 0;
        loop {
            if k == n {
                return total;
            }
            idx[k] += 1;
            if idx[k] < nodes {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: &DVector<f64>,
    fm: &DVector<f64>,
    fb: &DVector<f64>,
    whole: &DVector<f64>,
    tol: f64,
    depth: u32,
) -> DVector<f64>
where
    F: Fn(f64) -> DVector<f64>,
{
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let flm = f(lm);
    let frm = f(rm);
    let left = (fa + &flm * 4.0 + fm) * ((m - a) / 6.0);
    let right = (fm + &frm * 4.0 + fb) * ((b - m) / 6.0);
    let both = &left + &right;
    let err = (&both - whole).amax();
    if depth >= MAX_DEPTH || err <= 15.0 * tol {
        return &both + (&both - whole) / 15.0;
    }
    simpson_rec(f, a, m, fa, &flm, fm, &left, tol / 2.0, depth + 1)
        + simpson_rec(f, m, b, fm, &frm, fb, &right, tol / 2.0, depth + 1)
}

/// Adaptive Simpson for vector-valued integrands; `tol` is absolute in the
/// max norm.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64) -> DVector<f64>
where
    F: Fn(f64) -> DVector<f64>,
{
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (&fa + &fm * 4.0 + &fb) * ((b - a) / 6.0);
    simpson_rec(&f, a, b, &fa, &fm, &fb, &whole, tol, 0)
}

pub fn adaptive_simpson_scalar<F>(f: F, a: f64, b: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    adaptive_simpson(|s| DVector::from_element(1, f(s)), a, b, tol)[0]
}
