//! Shift-invariant kernels and dense kernel matrices.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::source::MatrixSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// `exp(-‖x-y‖² / (2σ²))`
    Gaussian,
    /// `exp(-‖x-y‖ / σ)`
    Laplace,
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Laplace => "laplace",
        })
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "rbf" | "gaussian-rbf" => Ok(KernelFamily::Gaussian),
            "laplace" | "laplacian" => Ok(KernelFamily::Laplace),
            other => Err(Error::config("kernel", format!("unknown kernel family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::Precondition(format!(
                "kernel bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        Ok(Self { family, bandwidth })
    }

    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, bandwidth)
    }

    pub fn laplace(bandwidth: f64) -> Result<Self> {
        Self::new(KernelFamily::Laplace, bandwidth)
    }

    /// Kernel value as a function of the squared Euclidean distance.
    #[inline]
    pub fn from_sq_dist(&self, sq_dist: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => (-sq_dist / (2.0 * self.bandwidth * self.bandwidth)).exp(),
            KernelFamily::Laplace => (-sq_dist.sqrt() / self.bandwidth).exp(),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        kernel_eval(self, x, y)
    }
}

#[inline]
fn sq_dist_rows(points: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    (0..points.ncols())
        .map(|c| {
            let diff = points[(i, c)] - points[(j, c)];
            diff * diff
        })
        .sum()
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    spec.from_sq_dist(sq)
}

/// Dense symmetric kernel matrix `K` with the spec it was built from.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    entries: DMatrix<f64>,
    spec: Option<KernelSpec>,
}

impl KernelMatrix {
    /// Wraps an arbitrary symmetric PSD matrix (for example an explicit feature Gram matrix).
    pub fn from_dense(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                got: entries.ncols(),
            });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::DataQuality("kernel matrix has non-finite entries".into()));
        }
        let mut entries = entries;
        linalg::symmetrize(&mut entries);
        Ok(Self { entries, spec: None })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn spec(&self) -> Option<&KernelSpec> {
        self.spec.as_ref()
    }

    /// Eigenvalues `λ_1 ≥ … ≥ λ_n`.
    pub fn eigenvalues(&self) -> DVector<f64> {
        linalg::sym_eigenvalues(&self.entries)
    }
}

impl MatrixSource for KernelMatrix {
    fn n(&self) -> usize {
        self.entries.nrows()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }
}

fn alloc_square(n: usize) -> Result<Vec<f64>> {
    let len = n
        .checked_mul(n)
        .ok_or_else(|| Error::Capacity(format!("{n}x{n} matrix size overflows")))?;
    let mut buf: Vec<f64> = Vec::new();
    buf.try_reserve_exact(len)
        .map_err(|e| Error::Capacity(format!("cannot allocate {n}x{n} kernel matrix: {e}")))?;
    buf.resize(len, 0.0);
    Ok(buf)
}

/// Builds `K_ij = k(x_i, x_j)`. Rows are filled in parallel; every entry is
/// computed independently so the result does not depend on the thread count.
pub fn kernel_matrix(spec: &KernelSpec, data: &Dataset) -> Result<KernelMatrix> {
    let n = data.n();
    let mut buf = alloc_square(n)?;
    let points = data.points();
    // Column-major storage: column j is contiguous. K is symmetric so filling
    // column j with k(x_i, x_j) is the same as filling row j.
    buf.par_chunks_mut(n).enumerate().for_each(|(j, col)| {
        for (i, slot) in col.iter_mut().enumerate() {
            *slot = if i == j {
                1.0
            } else {
                spec.from_sq_dist(sq_dist_rows(points, i, j))
            };
        }
    });
    Ok(KernelMatrix {
        entries: DMatrix::from_vec(n, n, buf),
        spec: Some(*spec),
    })
}

fn check_indices(idx: &[usize], n: usize) -> Result<()> {
    match idx.iter().find(|&&i| i >= n) {
        Some(&index) => Err(Error::IndexOutOfRange { index, n }),
        None => Ok(()),
    }
}

/// Kernel block `[k(x_r, x_c)]` for `r ∈ rows`, `c ∈ cols`, computed from points.
pub fn kernel_cross(
    spec: &KernelSpec,
    data: &Dataset,
    rows: &[usize],
    cols: &[usize],
) -> Result<DMatrix<f64>> {
    check_indices(rows, data.n())?;
    check_indices(cols, data.n())?;
    let points = data.points();
    Ok(DMatrix::from_fn(rows.len(), cols.len(), |a, b| {
        let (i, j) = (rows[a], cols[b]);
        if i == j {
            1.0
        } else {
            spec.from_sq_dist(sq_dist_rows(points, i, j))
        }
    }))
}

/// Kernel matrix evaluated lazily from the points; never stores `K`.
#[derive(Debug, Clone, Copy)]
pub struct KernelOperator<'a> {
    pub spec: KernelSpec,
    pub data: &'a Dataset,
}

impl<'a> KernelOperator<'a> {
    pub fn new(spec: KernelSpec, data: &'a Dataset) -> Self {
        Self { spec, data }
    }
}

impl MatrixSource for KernelOperator<'_> {
    fn n(&self) -> usize {
        self.data.n()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            1.0
        } else {
            self.spec.from_sq_dist(sq_dist_rows(self.data.points(), i, j))
        }
    }
}
