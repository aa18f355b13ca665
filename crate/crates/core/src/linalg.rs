//! Dense linear-algebra helpers shared by the projector, Christoffel and sampler modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative jitter added to the diagonal of a principal submatrix that fails to factor.
pub const JITTER_SCALE: f64 = 1e-12;
const JITTER_ATTEMPTS: usize = 8;

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
/// Columns of the returned matrix are the matching eigenvectors.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    let mut values: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    DVector::from_vec(values)
}

pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    sym_eigenvalues(m)[0]
}

pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let v = sym_eigenvalues(m);
    v[v.len() - 1]
}

/// Largest absolute eigenvalue of a symmetric matrix, i.e. its spectral norm.
pub fn sym_spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let v = sym_eigenvalues(m);
    v[0].abs().max(v[v.len() - 1].abs())
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn principal_submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])])
}

pub fn select_columns(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), idx.len(), |r, c| m[(r, idx[c])])
}

/// Cholesky factorization that retries with trace-scaled diagonal jitter
/// when the matrix is numerically singular. Each retry is logged.
pub fn cholesky_jittered(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if let Some(ch) = Cholesky::new(m.clone()) {
        return Ok(ch);
    }
    let n = m.nrows().max(1);
    let base = (m.trace().abs() / n as f64).max(f64::MIN_POSITIVE) * JITTER_SCALE;
    let mut jitter = base;
    for _ in 0..JITTER_ATTEMPTS {
        let mut shifted = m.clone();
        for i in 0..m.nrows() {
            shifted[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(shifted) {
            log::warn!("{what}: added diagonal jitter {jitter:.3e} to factor a singular matrix");
            return Ok(ch);
        }
        jitter *= 10.0;
    }
    Err(Error::Factorization(format!(
        "{what}: matrix of size {} not positive definite even with jitter {jitter:.3e}",
        m.nrows()
    )))
}

/// Lower-triangular Cholesky factor grown one row/column at a time.
///
/// Row `i` stores the first `i + 1` entries of the factor's row `i`.
#[derive(Debug, Clone, Default)]
pub struct IncrementalCholesky {
    rows: Vec<Vec<f64>>,
}

impl IncrementalCholesky {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Solves `L y = v` by forward substitution.
    pub fn forward_solve(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.dim());
        let mut y = Vec::with_capacity(v.len());
        for (i, row) in self.rows.iter().enumerate() {
            let mut acc = v[i];
            for (k, yk) in y.iter().enumerate() {
                acc -= row[k] * yk;
            }
            y.push(acc / row[i]);
        }
        y
    }

    /// Appends a row and column to the factored matrix.
    ///
    /// `y` must be `L^{-1} c` for the new off-diagonal column `c`, and `diag` the new
    /// diagonal entry of the factored matrix. Fails when the new pivot is not positive.
    pub fn append(&mut self, mut y: Vec<f64>, diag: f64) -> Result<()> {
        debug_assert_eq!(y.len(), self.dim());
        let pivot = diag - y.iter().map(|v| v * v).sum::<f64>();
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(Error::Factorization(format!(
                "incremental Cholesky pivot {pivot:.3e} is not positive"
            )));
        }
        y.push(pivot.sqrt());
        self.rows.push(y);
        Ok(())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let m = self.dim();
        DMatrix::from_fn(m, m, |i, j| if j <= i { self.rows[i][j] } else { 0.0 })
    }
}

/// Explicit inverse of a growing symmetric positive definite matrix, updated with
/// the block matrix-inversion lemma on every append.
#[derive(Debug, Clone)]
pub struct CoreInverse {
    inverse: DMatrix<f64>,
}

impl Default for CoreInverse {
    fn default() -> Self {
        Self::new()
    }
}

impl CoreInverse {
    pub fn new() -> Self {
        Self {
            inverse: DMatrix::zeros(0, 0),
        }
    }

    pub fn dim(&self) -> usize {
        self.inverse.nrows()
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    /// `vᵀ A^{-1} v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let m = self.dim();
        let mut total = 0.0;
        for i in 0..m {
            let mut row = 0.0;
            for j in 0..m {
                row += self.inverse[(i, j)] * v[j];
            }
            total += v[i] * row;
        }
        total
    }

    /// Grows `A` to `[[A, c], [cᵀ, diag]]`.
    pub fn append(&mut self, c: &[f64], diag: f64) -> Result<()> {
        let m = self.dim();
        let u: Vec<f64> = (0..m)
            .map(|i| (0..m).map(|j| self.inverse[(i, j)] * c[j]).sum())
            .collect();
        let schur = diag - c.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
        if !(schur > 0.0) || !schur.is_finite() {
            return Err(Error::Factorization(format!(
                "Schur complement {schur:.3e} is not positive in inverse update"
            )));
        }
        let mut next = DMatrix::zeros(m + 1, m + 1);
        for i in 0..m {
            for j in 0..m {
                next[(i, j)] = self.inverse[(i, j)] + u[i] * u[j] / schur;
            }
            next[(i, m)] = -u[i] / schur;
            next[(m, i)] = -u[i] / schur;
        }
        next[(m, m)] = 1.0 / schur;
        self.inverse = next;
        Ok(())
    }

    /// Replaces the running inverse with one computed from scratch.
    pub fn refresh(&mut self, matrix: &DMatrix<f64>) -> Result<()> {
        let ch = cholesky_jittered(matrix, "core inverse refresh")?;
        self.inverse = ch.inverse();
        Ok(())
    }
}
