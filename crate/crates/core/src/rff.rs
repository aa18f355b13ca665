//! Random Fourier features for the Gaussian kernel and the approximate
//! projector `P̂ = F(FᵀF + nγI)^{-1}Fᵀ` used by the large-scale sampler.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{KernelFamily, KernelSpec};
use crate::linalg;
use crate::samplers::{ras_pass, CoreUpdate, RasParams, RasTrace};
use crate::source::MatrixSource;

/// Default number of random features.
pub const DEFAULT_FEATURES: usize = 4000;

/// `z(x) = √(2/n_F) cos(Wx + b)` with `W_ij ~ N(0, σ^{-2})`, `b_i ~ U[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RffMap {
    frequencies: DMatrix<f64>,
    phases: Vec<f64>,
    scale: f64,
}

pub fn rff_build(spec: &KernelSpec, d: usize, n_features: usize, seed: u64) -> Result<RffMap> {
    if spec.family != KernelFamily::Gaussian {
        return Err(Error::UnsupportedFamily(format!(
            "random Fourier features are implemented for the Gaussian kernel only, got {}",
            spec.family
        )));
    }
    if n_features == 0 || d == 0 {
        return Err(Error::Precondition("need n_features >= 1 and d >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0 / spec.bandwidth)
        .map_err(|e| Error::Precondition(format!("frequency distribution: {e}")))?;
    let mut frequencies = DMatrix::zeros(n_features, d);
    for i in 0..n_features {
        for j in 0..d {
            frequencies[(i, j)] = normal.sample(&mut rng);
        }
    }
    let phases = (0..n_features).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
    Ok(RffMap {
        frequencies,
        phases,
        scale: (2.0 / n_features as f64).sqrt(),
    })
}

impl RffMap {
    pub fn n_features(&self) -> usize {
        self.phases.len()
    }

    pub fn dim(&self) -> usize {
        self.frequencies.ncols()
    }

    pub fn frequencies(&self) -> &DMatrix<f64> {
        &self.frequencies
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn map_point(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(DVector::from_fn(self.n_features(), |f, _| self.feature(f, x)))
    }

    #[inline]
    fn feature(&self, f: usize, x: &[f64]) -> f64 {
        let arg: f64 = x
            .iter()
            .enumerate()
            .map(|(j, xj)| self.frequencies[(f, j)] * xj)
            .sum::<f64>()
            + self.phases[f];
        self.scale * arg.cos()
    }
}

/// Feature matrix `F` with row `i` equal to `z(x_i)`.
pub fn featurize(map: &RffMap, data: &Dataset) -> Result<DMatrix<f64>> {
    if data.dim() != map.dim() {
        return Err(Error::DimensionMismatch {
            expected: map.dim(),
            got: data.dim(),
        });
    }
    let n = data.n();
    let nf = map.n_features();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = data.point(i);
            (0..nf).map(|f| map.feature(f, &x)).collect()
        })
        .collect();
    Ok(DMatrix::from_fn(n, nf, |i, f| rows[i][f]))
}

/// Implicit `P̂ = F(FᵀF + nγI)^{-1}Fᵀ`, stored as `HᵀH` with `H = L^{-1}Fᵀ`
/// where `LLᵀ = FᵀF + nγI` (an `n_F × n_F` Cholesky).
#[derive(Debug, Clone)]
pub struct ApproxProjector {
    half: DMatrix<f64>,
    diag: DVector<f64>,
    gamma: f64,
}

pub fn approx_projector(features: &DMatrix<f64>, gamma: f64) -> Result<ApproxProjector> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Precondition(format!("gamma must be positive, got {gamma}")));
    }
    let n = features.nrows();
    let mut gram = features.transpose() * features;
    linalg::symmetrize(&mut gram);
    let ngamma = n as f64 * gamma;
    for i in 0..gram.nrows() {
        gram[(i, i)] += ngamma;
    }
    let chol = linalg::cholesky_jittered(&gram, "FᵀF + nγI")?;
    let mut half = features.transpose();
    chol.l().solve_lower_triangular_mut(&mut half);
    let diag = DVector::from_fn(n, |i, _| half.column(i).norm_squared());
    Ok(ApproxProjector { half, diag, gamma })
}

impl ApproxProjector {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn diagonal(&self) -> &DVector<f64> {
        &self.diag
    }
}

impl MatrixSource for ApproxProjector {
    fn n(&self) -> usize {
        self.half.ncols()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.half.column(i).dot(&self.half.column(j))
    }

    fn diag(&self, i: usize) -> f64 {
        self.diag[i]
    }

    fn column(&self, j: usize) -> DVector<f64> {
        self.half.tr_mul(&self.half.column(j))
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.half.tr_mul(&self.half)
    }
}

/// Randomized adaptive sampling against `P̂`, keeping `(SᵀP̂S + εI)^{-1}`
/// explicitly and updating it by the matrix-inversion lemma on each acceptance.
pub fn approx_ras(projector: &ApproxProjector, params: RasParams, seed: u64) -> Result<RasTrace> {
    ras_pass(projector, params, seed, CoreUpdate::Woodbury)
}

const CACHE_MAGIC: &[u8; 8] = b"LMKFEAT1";
const CACHE_HEADER: usize = 24;

/// Serializes a feature matrix: 8-byte magic, rows and columns as little-endian
/// `u64`, then the entries as little-endian `f64` in row-major order.
pub fn encode_features(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(CACHE_HEADER + m.len() * 8);
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out
}

pub fn decode_features(bytes: &[u8]) -> Result<DMatrix<f64>> {
    if bytes.len() < CACHE_HEADER {
        return Err(Error::Parse(format!(
            "feature cache too short: {} bytes",
            bytes.len()
        )));
    }
    if &bytes[..8] != CACHE_MAGIC {
        return Err(Error::Parse("feature cache has wrong magic header".into()));
    }
    let read_u64 = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let (rows, cols) = (read_u64(8), read_u64(16));
    let count = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| usize::try_from(c).ok())
        .ok_or_else(|| Error::Parse(format!("feature cache dimensions {rows}x{cols} overflow")))?;
    let payload = &bytes[CACHE_HEADER..];
    if payload.len() != count {
        return Err(Error::Parse(format!(
            "feature cache payload is {} bytes, expected {count} for {rows}x{cols}",
            payload.len()
        )));
    }
    let (rows, cols) = (rows as usize, cols as usize);
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parse("feature cache contains non-finite values".into()));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn write_features<W: Write>(m: &DMatrix<f64>, mut out: W) -> Result<()> {
    out.write_all(&encode_features(m))?;
    Ok(())
}

pub fn read_features<R: Read>(mut input: R) -> Result<DMatrix<f64>> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    decode_features(&buf)
}
