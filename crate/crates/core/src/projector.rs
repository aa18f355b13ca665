//! Projector (smoothing) kernel `P = K(K + nγI)^{-1}`, regularized Nyström
//! approximations and the error metrics used to compare landmark sets.
//!
//! `P` is assembled from the eigendecomposition of `K` as `V diag(Λ) Vᵀ` with
//! `Λ_m = λ_m / (λ_m + nγ)`, which keeps it exactly symmetric and yields the
//! square-root factor `B = diag(Λ^{1/2}) Vᵀ` (`BᵀB = P`) in the same pass.

use std::collections::HashSet;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{kernel_cross, KernelMatrix, KernelSpec};
use crate::linalg;
use crate::source::MatrixSource;

/// Ordered set of distinct landmark indices, optionally carrying the inclusion
/// probability `p_i` of each landmark. With probabilities the sampling matrix
/// column for index `i` is `e_i / √p_i`, otherwise `e_i`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LandmarkSet {
    indices: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    probabilities: Option<Vec<f64>>,
}

impl LandmarkSet {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(indices.len());
        if let Some(dup) = indices.iter().find(|i| !seen.insert(**i)) {
            return Err(Error::Precondition(format!("duplicate landmark index {dup}")));
        }
        Ok(Self {
            indices,
            probabilities: None,
        })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn all(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
            probabilities: None,
        }
    }

    pub fn with_probabilities(indices: Vec<usize>, probabilities: Vec<f64>) -> Result<Self> {
        if indices.len() != probabilities.len() {
            return Err(Error::DimensionMismatch {
                expected: indices.len(),
                got: probabilities.len(),
            });
        }
        if let Some(p) = probabilities.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
            return Err(Error::Precondition(format!("probability {p} not in (0, 1]")));
        }
        let mut set = Self::new(indices)?;
        set.probabilities = Some(probabilities);
        Ok(set)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn probabilities(&self) -> Option<&[f64]> {
        self.probabilities.as_deref()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.contains(&i)
    }

    /// Column scale of the sampling matrix for each landmark (`1/√p_i`, or 1).
    pub fn scales(&self) -> Vec<f64> {
        match &self.probabilities {
            Some(p) => p.iter().map(|p| 1.0 / p.sqrt()).collect(),
            None => vec![1.0; self.indices.len()],
        }
    }

    /// Same indices without probabilities.
    pub fn unweighted(&self) -> Self {
        Self {
            indices: self.indices.clone(),
            probabilities: None,
        }
    }

    /// First `k` landmarks in selection order.
    pub fn prefix(&self, k: usize) -> Self {
        let k = k.min(self.len());
        Self {
            indices: self.indices[..k].to_vec(),
            probabilities: self.probabilities.as_ref().map(|p| p[..k].to_vec()),
        }
    }

    /// Dense `n × |C|` sampling matrix.
    pub fn sampling_matrix(&self, n: usize) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(n, self.len());
        for (c, (&i, scale)) in self.indices.iter().zip(self.scales()).enumerate() {
            s[(i, c)] = scale;
        }
        s
    }

    pub(crate) fn check_range(&self, n: usize) -> Result<()> {
        match self.indices.iter().find(|&&i| i >= n) {
            Some(&index) => Err(Error::IndexOutOfRange { index, n }),
            None => Ok(()),
        }
    }
}

/// Projector kernel with its spectrum and square-root factor.
#[derive(Debug, Clone)]
pub struct ProjectorKernel {
    entries: DMatrix<f64>,
    gamma: f64,
    /// Λ_1 ≥ … ≥ Λ_n
    spectrum: DVector<f64>,
    /// λ_1 ≥ … ≥ λ_n of the underlying kernel matrix, clamped at zero.
    kernel_spectrum: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

/// Eigendecomposition of a kernel matrix, reusable across several γ.
#[derive(Debug, Clone)]
pub struct KernelSpectrum {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
}

impl KernelSpectrum {
    pub fn new(k: &KernelMatrix) -> Self {
        let (values, vectors) = linalg::sym_eigen(k.entries());
        // Rounding can push the tail of a PSD spectrum slightly below zero.
        let values = values.map(|v| v.max(0.0));
        Self { values, vectors }
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.values
    }

    /// `d_eff(γ) = Σ λ_m / (λ_m + nγ)`.
    pub fn effective_dimension(&self, gamma: f64) -> f64 {
        let ngamma = self.n() as f64 * gamma;
        self.values.iter().map(|l| l / (l + ngamma)).sum()
    }

    pub fn projector(&self, gamma: f64) -> Result<ProjectorKernel> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Precondition(format!("gamma must be positive, got {gamma}")));
        }
        let n = self.n();
        let ngamma = n as f64 * gamma;
        let spectrum = self.values.map(|l| l / (l + ngamma));
        let entries = filtered(&self.vectors, &spectrum);
        Ok(ProjectorKernel {
            entries,
            gamma,
            spectrum,
            kernel_spectrum: self.values.clone(),
            eigenvectors: self.vectors.clone(),
        })
    }
}

/// `V diag(f) Vᵀ`, symmetrized.
fn filtered(vectors: &DMatrix<f64>, f: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = vectors.clone();
    for (j, fj) in f.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*fj);
    }
    let mut out = scaled * vectors.transpose();
    linalg::symmetrize(&mut out);
    out
}

pub fn projector_kernel(k: &KernelMatrix, gamma: f64) -> Result<ProjectorKernel> {
    KernelSpectrum::new(k).projector(gamma)
}

impl ProjectorKernel {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn spectrum(&self) -> &DVector<f64> {
        &self.spectrum
    }

    pub fn kernel_spectrum(&self) -> &DVector<f64> {
        &self.kernel_spectrum
    }

    pub fn kernel_lambda_max(&self) -> f64 {
        self.kernel_spectrum.get(0).copied().unwrap_or(0.0)
    }

    /// `B = diag(Λ^{1/2}) Vᵀ`, so that `BᵀB = P`.
    pub fn factor(&self) -> DMatrix<f64> {
        let mut b = self.eigenvectors.transpose();
        for (i, lam) in self.spectrum.iter().enumerate() {
            b.row_mut(i).scale_mut(lam.max(0.0).sqrt());
        }
        b
    }

    /// `P_ε(P) = P(P + εI)^{-1}`.
    pub fn filtered_projector(&self, epsilon: f64) -> DMatrix<f64> {
        let f = self.spectrum.map(|l| l / (l + epsilon));
        filtered(&self.eigenvectors, &f)
    }

    /// `Ψ = (BBᵀ + εI)^{-1/2} B`, whose Gram matrix `ΨᵀΨ` is `P_ε(P)`.
    pub fn psi_factor(&self, epsilon: f64) -> DMatrix<f64> {
        let b = self.factor();
        let bbt = &b * b.transpose();
        let (vals, vecs) = linalg::sym_eigen(&bbt);
        let inv_sqrt = vals.map(|v| 1.0 / (v.max(0.0) + epsilon).sqrt());
        filtered(&vecs, &inv_sqrt) * b
    }

    /// Effective dimension of the underlying kernel at another regularization.
    pub fn kernel_effective_dimension(&self, gamma: f64) -> f64 {
        let ngamma = self.n() as f64 * gamma;
        self.kernel_spectrum.iter().map(|l| l / (l + ngamma)).sum()
    }
}

impl MatrixSource for ProjectorKernel {
    fn n(&self) -> usize {
        self.entries.nrows()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }
}

/// Ridge leverage scores `ℓ_{nγ}(x_z) = P_zz`.
pub fn leverage_scores(p: &ProjectorKernel) -> DVector<f64> {
    p.entries.diagonal()
}

/// `d_eff(γ) = trace(P)`.
pub fn effective_dimension(p: &ProjectorKernel) -> f64 {
    p.entries.trace()
}

/// Factored `L_{μ,S}(A) = AS(SᵀAS + μI)^{-1}SᵀA`, stored as `WᵀW` with
/// `W = L^{-1}(AS)ᵀ` where `LLᵀ = SᵀAS + μI`.
#[derive(Debug, Clone)]
pub struct NystromApprox {
    n: usize,
    landmarks: LandmarkSet,
    mu: f64,
    half: DMatrix<f64>,
}

pub fn nystrom<A: MatrixSource + ?Sized>(
    base: &A,
    landmarks: &LandmarkSet,
    mu: f64,
) -> Result<NystromApprox> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::Precondition(format!("mu must be >= 0, got {mu}")));
    }
    let n = base.n();
    landmarks.check_range(n)?;
    let m = landmarks.len();
    let idx = landmarks.indices();
    let scales = landmarks.scales();
    // (AS)ᵀ, m × n
    let mut ast = DMatrix::from_fn(m, n, |c, i| base.entry(idx[c], i) * scales[c]);
    if m == 0 {
        return Ok(NystromApprox {
            n,
            landmarks: landmarks.clone(),
            mu,
            half: ast,
        });
    }
    let mut core = DMatrix::from_fn(m, m, |a, b| ast[(a, idx[b])] * scales[b]);
    linalg::symmetrize(&mut core);
    for i in 0..m {
        core[(i, i)] += mu;
    }
    let chol = if mu == 0.0 {
        nalgebra::Cholesky::new(core).ok_or_else(|| {
            Error::Singular(format!("SᵀAS with {m} landmarks is not positive definite"))
        })?
    } else {
        linalg::cholesky_jittered(&core, "Nyström core")?
    };
    let l = chol.l();
    if !l.solve_lower_triangular_mut(&mut ast) {
        return Err(Error::Singular("zero pivot in Nyström core factor".into()));
    }
    Ok(NystromApprox {
        n,
        landmarks: landmarks.clone(),
        mu,
        half: ast,
    })
}

impl NystromApprox {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn landmarks(&self) -> &LandmarkSet {
        &self.landmarks
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn rank(&self) -> usize {
        self.half.nrows()
    }

    /// Principal submatrix of the approximation on `rows`.
    pub fn submatrix(&self, rows: &[usize]) -> DMatrix<f64> {
        let w = DMatrix::from_fn(self.half.nrows(), rows.len(), |a, c| self.half[(a, rows[c])]);
        w.transpose() * w
    }

    pub fn diagonal(&self) -> DVector<f64> {
        DVector::from_fn(self.n, |i, _| self.half.column(i).norm_squared())
    }
}

impl MatrixSource for NystromApprox {
    fn n(&self) -> usize {
        self.n
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.half.column(i).dot(&self.half.column(j))
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.half.transpose() * &self.half
    }
}

/// `diag(A − A_C A_CC^{-1} A_Cᵀ)` for an arbitrary symmetric source.
pub fn residual_diagonal_of<A: MatrixSource + ?Sized>(
    a: &A,
    landmarks: &LandmarkSet,
) -> Result<DVector<f64>> {
    let n = a.n();
    landmarks.check_range(n)?;
    let diag = DVector::from_fn(n, |i, _| a.diag(i));
    if landmarks.is_empty() {
        return Ok(diag);
    }
    let idx = landmarks.indices();
    let m = idx.len();
    let mut core = a.block(idx, idx);
    linalg::symmetrize(&mut core);
    let chol = linalg::cholesky_jittered(&core, "P_CC")?;
    let mut y = DMatrix::from_fn(m, n, |c, i| a.entry(idx[c], i));
    chol.l().solve_lower_triangular_mut(&mut y);
    Ok(DVector::from_fn(n, |i, _| diag[i] - y.column(i).norm_squared()))
}

/// Diagonal of the projector residual `P − P_C P_CC^{-1} P_Cᵀ`.
pub fn residual_diagonal(p: &ProjectorKernel, landmarks: &LandmarkSet) -> Result<DVector<f64>> {
    residual_diagonal_of(p, landmarks)
}

/// `‖K − K̂‖₂ / ‖K‖₂`.
pub fn error_operator_norm(k: &KernelMatrix, approx: &NystromApprox) -> f64 {
    let denom = linalg::sym_spectral_norm(k.entries());
    if denom == 0.0 {
        return 0.0;
    }
    let residual = k.entries() - approx.to_dense();
    linalg::sym_spectral_norm(&residual) / denom
}

/// `max_ij |A_ij − Â_ij|`.
pub fn error_max_norm<A: MatrixSource + ?Sized>(a: &A, approx: &NystromApprox) -> f64 {
    let n = a.n();
    let mut best = 0.0_f64;
    for j in 0..n {
        for i in 0..n {
            best = best.max((a.entry(i, j) - approx.entry(i, j)).abs());
        }
    }
    best
}

/// Frobenius errors of the principal submatrices of `K − K̂` on random index subsets.
pub fn error_frobenius_subsets(
    spec: &KernelSpec,
    data: &Dataset,
    approx: &NystromApprox,
    subset_size: usize,
    num_subsets: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = data.n();
    if subset_size > n {
        return Err(Error::Precondition(format!(
            "subset size {subset_size} exceeds n = {n}"
        )));
    }
    if approx.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: approx.n(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..num_subsets)
        .map(|_| {
            let mut rows = rand::seq::index::sample(&mut rng, n, subset_size).into_vec();
            rows.sort_unstable();
            let k = kernel_cross(spec, data, &rows, &rows)?;
            Ok((k - approx.submatrix(&rows)).norm())
        })
        .collect()
}

/// Outcome of a dense PSD-gap check `lhs − rhs ⪰ −tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdGapReport {
    pub min_eigenvalue: f64,
    pub tolerance: f64,
    pub holds: bool,
}

/// Checks `(λ_max(K)+nγ)(P − L_{μ̃,S}(P)) − (K − L_{μ,S}(K)) ⪰ 0` with `μ̃ = μ/(λ_max(K)+nγ)`.
pub fn check_lemma1(
    k: &KernelMatrix,
    p: &ProjectorKernel,
    landmarks: &LandmarkSet,
    mu: f64,
) -> Result<PsdGapReport> {
    if !(mu > 0.0) {
        return Err(Error::Precondition(format!("mu must be positive, got {mu}")));
    }
    let n = k.n();
    let lmax = linalg::lambda_max(k.entries());
    let scale = lmax + n as f64 * p.gamma();
    let lk = nystrom(k, landmarks, mu)?.to_dense();
    let lp = nystrom(p, landmarks, mu / scale)?.to_dense();
    let mut gap = (p.entries() - lp) * scale - (k.entries() - lk);
    linalg::symmetrize(&mut gap);
    let min_eigenvalue = linalg::lambda_min(&gap);
    let tolerance = 1e-8 * lmax;
    Ok(PsdGapReport {
        min_eigenvalue,
        tolerance,
        holds: min_eigenvalue >= -tolerance,
    })
}

/// Writes a dense matrix as CSV, row-major, in full-precision scientific notation.
pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, mut out: W) -> Result<()> {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.17e}", m[(i, j)])).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
