#![allow(dead_code)]

use kolmo::{validate_operator, OperatorSpec, RawOperator};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

fn offsets(strata: &[usize]) -> Vec<usize> {
    let mut off = vec![0];
    for m in strata {
        off.push(off.last().unwrap() + m);
    }
    off
}

/// Non-increasing strata summing to at most `max_dim`.
pub fn random_strata<R: Rng>(rng: &mut R, max_dim: usize) -> Vec<usize> {
    let mut strata = vec![rng.random_range(1..=3usize.min(max_dim))];
    loop {
        let used: usize = strata.iter().sum();
        let last = *strata.last().unwrap();
        if used >= max_dim || rng.random_bool(0.3) {
            break;
        }
        let next = rng.random_range(1..=last.min(max_dim - used));
        strata.push(next);
    }
    strata
}

fn gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// A valid block-form operator: SPD A₀, full-rank subdiagonal blocks and
/// (with probability ½) small starred blocks on and above the diagonal.
pub fn random_block_raw<R: Rng>(rng: &mut R, strata: &[usize]) -> RawOperator {
    let n: usize = strata.iter().sum();
    let m0 = strata[0];
    let off = offsets(strata);
    let l = gaussian(rng, m0, m0);
    let a0 = &l * l.transpose() * 0.5 + DMatrix::identity(m0, m0);
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (m0, m0)).copy_from(&a0);
    let mut b = DMatrix::zeros(n, n);
    for j in 1..strata.len() {
        loop {
            let blk = gaussian(rng, strata[j], strata[j - 1]);
            if blk.clone().svd(false, false).singular_values.min() > 0.2 {
                b.view_mut((off[j], off[j - 1]), (strata[j], strata[j - 1])).copy_from(&blk);
                break;
            }
        }
    }
    if rng.random_bool(0.5) {
        for j in 0..strata.len() {
            for k in j..strata.len() {
                let blk = gaussian(rng, strata[j], strata[k]) * 0.3;
                b.view_mut((off[j], off[k]), (strata[j], strata[k])).copy_from(&blk);
            }
        }
    }
    RawOperator::new(a, b, strata.to_vec())
}

pub fn random_block_spec<R: Rng>(rng: &mut R, max_dim: usize) -> OperatorSpec {
    let strata = random_strata(rng, max_dim);
    validate_operator(&random_block_raw(rng, &strata)).expect("generator emits valid operators")
}

/// A structurally degenerate operator that fails every condition: either
/// A = 0, a zeroed subdiagonal block, or a rank-one subdiagonal block
/// with the starred blocks removed.
pub fn random_broken_raw<R: Rng>(rng: &mut R) -> RawOperator {
    loop {
        let strata = random_strata(rng, 6);
        let mut raw = random_block_raw(rng, &strata);
        let off = offsets(&strata);
        match rng.random_range(0..3) {
            0 => {
                raw.a.fill(0.0);
                return raw;
            }
            1 if strata.len() > 1 => {
                let j = rng.random_range(1..strata.len());
                raw.b.view_mut((off[j], off[j - 1]), (strata[j], strata[j - 1])).fill(0.0);
                return raw;
            }
            2 if strata.iter().skip(1).any(|&m| m > 1) => {
                let j = (1..strata.len()).find(|&j| strata[j] > 1).unwrap();
                let mut b = DMatrix::zeros(raw.b.nrows(), raw.b.ncols());
                for i in 1..strata.len() {
                    let blk = raw.b.view((off[i], off[i - 1]), (strata[i], strata[i - 1])).into_owned();
                    let blk = if i == j {
                        let u = gaussian(rng, strata[i], 1);
                        let v = gaussian(rng, 1, strata[i - 1]);
                        u * v
                    } else {
                        blk
                    };
                    b.view_mut((off[i], off[i - 1]), (strata[i], strata[i - 1])).copy_from(&blk);
                }
                raw.b = b;
                return raw;
            }
            _ => continue,
        }
    }
}

pub fn relative(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}
