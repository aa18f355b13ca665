#![allow(dead_code)]

use landmarks::{kernel_matrix, projector_kernel, Dataset, KernelMatrix, KernelSpec, ProjectorKernel};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn random_points(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let points = DMatrix::from_fn(n, d, |_, _| normal.sample(&mut rng));
    Dataset::new(points).unwrap()
}

pub struct Setup {
    pub data: Dataset,
    pub k: KernelMatrix,
    pub p: ProjectorKernel,
}

pub fn setup(n: usize, d: usize, sigma: f64, gamma: f64, seed: u64) -> Setup {
    let data = random_points(n, d, seed);
    let k = kernel_matrix(&KernelSpec::gaussian(sigma).unwrap(), &data).unwrap();
    let p = projector_kernel(&k, gamma).unwrap();
    Setup { data, k, p }
}

pub fn inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().lu().try_inverse().expect("invertible")
}

/// `K(K + nγI)^{-1}` by a direct linear solve.
pub fn projector_by_solve(k: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    let n = k.nrows();
    let shifted = k + DMatrix::identity(n, n) * (n as f64 * gamma);
    // K and (K + cI) commute, so solving from either side gives the same matrix.
    shifted.lu().solve(k).unwrap()
}

pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| m[(rows[a], cols[b])])
}

/// `AS(SᵀAS + μI)^{-1}SᵀA` with `S` selecting `idx` scaled by `w`.
pub fn nystrom_dense(a: &DMatrix<f64>, idx: &[usize], w: &[f64], mu: f64) -> DMatrix<f64> {
    let n = a.nrows();
    if idx.is_empty() {
        return DMatrix::zeros(n, n);
    }
    let mut s = DMatrix::zeros(n, idx.len());
    for (c, (&i, &wi)) in idx.iter().zip(w).enumerate() {
        s[(i, c)] = wi;
    }
    let as_ = a * &s;
    let core = s.transpose() * &as_ + DMatrix::identity(idx.len(), idx.len()) * mu;
    &as_ * inverse(&core) * as_.transpose()
}

/// `P − P_C P_CC^{-1} P_Cᵀ` densely.
pub fn residual_dense(p: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let ones = vec![1.0; idx.len()];
    p - nystrom_dense(p, idx, &ones, 0.0)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().max()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

/// Largest eigenvalue of a PSD matrix by power iteration.
pub fn power_iteration(m: &DMatrix<f64>, iters: usize) -> f64 {
    let n = m.nrows();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64).sin());
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = m * &v;
        lambda = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
    }
    lambda
}

/// Root of `w e^w = y` on the lower branch by plain bisection.
pub fn lambert_bisection(y: f64) -> f64 {
    let f = |w: f64| w * w.exp() - y;
    // f decreases on (-inf, -1]
    let (mut lo, mut hi) = (-1.0_f64, -1.0_f64);
    while f(lo) < 0.0 {
        lo *= 2.0;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
