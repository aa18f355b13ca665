//! Constrained regularized Christoffel functions on a finite data set.
//!
//! For an exclusion set `C` and a query point `z ∉ C`, the Christoffel function
//! `C_C(x_z)` is the minimum of `n^{-1} Σ_i f(x_i)² + γ‖f‖²` over the RKHS
//! subject to `f(x_z) = 1` and `f(x_s) = 0` for `s ∈ C`. Its inverse is
//! `n^{-1}[P − P_C P_CC^{-1} P_Cᵀ]_zz`, which is the production path here. The
//! determinant-ratio and projection forms and the brute-force quadratic
//! program exist to cross-check it.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::KernelMatrix;
use crate::linalg;
use crate::projector::{LandmarkSet, ProjectorKernel};

/// Largest problem size accepted by [`qp_oracle`].
pub const QP_ORACLE_MAX_N: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct ChristoffelQuery {
    pub z: usize,
    pub exclusion: Vec<usize>,
    pub gamma: f64,
    /// When set, the hard constraints on `exclusion` are replaced by weights
    /// `1 + 1/ε` in the empirical term.
    pub soft_epsilon: Option<f64>,
}

impl ChristoffelQuery {
    pub fn new(z: usize, exclusion: Vec<usize>, gamma: f64) -> Self {
        Self {
            z,
            exclusion,
            gamma,
            soft_epsilon: None,
        }
    }

    pub fn soft(mut self, epsilon: f64) -> Self {
        self.soft_epsilon = Some(epsilon);
        self
    }

    fn validate(&self, n: usize) -> Result<LandmarkSet> {
        if self.z >= n {
            return Err(Error::IndexOutOfRange { index: self.z, n });
        }
        if self.exclusion.contains(&self.z) {
            return Err(Error::Precondition(format!(
                "query index {} belongs to the exclusion set",
                self.z
            )));
        }
        let set = LandmarkSet::new(self.exclusion.clone())?;
        set.check_range(n)?;
        Ok(set)
    }

    /// Per-point weights of the soft-constraint objective.
    pub fn soft_weights(&self, n: usize) -> Option<Vec<f64>> {
        self.soft_epsilon.map(|eps| {
            let mut w = vec![1.0; n];
            for &s in &self.exclusion {
                w[s] = 1.0 + 1.0 / eps;
            }
            w
        })
    }
}

/// `[A − A_C A_CC^{-1} A_Cᵀ]_zz` together with the Cholesky of `A_CC`.
fn schur_residual(a: &DMatrix<f64>, c: &[usize], z: usize) -> Result<f64> {
    if c.is_empty() {
        return Ok(a[(z, z)]);
    }
    let core = linalg::principal_submatrix(a, c);
    let chol = linalg::cholesky_jittered(&core, "P_CC")?;
    let mut v = DVector::from_fn(c.len(), |i, _| a[(c[i], z)]);
    chol.l().solve_lower_triangular_mut(&mut v);
    Ok(a[(z, z)] - v.norm_squared())
}

/// `C_C(x_z)^{-1} = n^{-1}[P − P_C P_CC^{-1} P_Cᵀ]_zz` (Schur-complement form).
pub fn christoffel_inverse(p: &ProjectorKernel, q: &ChristoffelQuery) -> Result<f64> {
    q.validate(p.n())?;
    Ok(schur_residual(p.entries(), &q.exclusion, q.z)? / p.n() as f64)
}

/// Value of the determinant-ratio form with the log-determinants it was built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeterminantForm {
    pub value: f64,
    pub log_det_with_z: f64,
    pub log_det_without_z: f64,
}

fn log_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    let chol = nalgebra::Cholesky::new(m.clone()).ok_or_else(|| {
        Error::Factorization("principal submatrix is not numerically positive definite".into())
    })?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// `C_C(x_z)^{-1} = n^{-1} det P_{C_z C_z} / det P_CC` evaluated through log-determinants.
pub fn christoffel_inverse_det(p: &ProjectorKernel, q: &ChristoffelQuery) -> Result<DeterminantForm> {
    q.validate(p.n())?;
    if q.exclusion.is_empty() {
        return Err(Error::Precondition(
            "determinant form needs a non-empty exclusion set".into(),
        ));
    }
    let c = &q.exclusion;
    let mut cz = c.clone();
    cz.push(q.z);
    let log_det_without_z = log_det_spd(&linalg::principal_submatrix(p.entries(), c))?;
    if log_det_without_z < f64::MIN_POSITIVE.ln() {
        return Err(Error::DeterminantUnderflow(format!(
            "log det P_CC = {log_det_without_z:.3} for |C| = {}",
            c.len()
        )));
    }
    let log_det_with_z = log_det_spd(&linalg::principal_submatrix(p.entries(), &cz))?;
    Ok(DeterminantForm {
        value: (log_det_with_z - log_det_without_z).exp() / p.n() as f64,
        log_det_with_z,
        log_det_without_z,
    })
}

/// `C_C(x_z)^{-1} = n^{-1}‖b_z − π_{V_C} b_z‖²`, with `b_z` the `z`-th column of
/// `B` and `π_{V_C}` the orthogonal projector onto the span of `{b_s : s ∈ C}`.
pub fn christoffel_inverse_projection(p: &ProjectorKernel, q: &ChristoffelQuery) -> Result<f64> {
    q.validate(p.n())?;
    let b = p.factor();
    let bz = b.column(q.z).into_owned();
    if q.exclusion.is_empty() {
        return Ok(bz.norm_squared() / p.n() as f64);
    }
    let bc = linalg::select_columns(&b, &q.exclusion);
    let qmat = bc.qr().q();
    let coeff = qmat.transpose() * &bz;
    let resid = bz - qmat * coeff;
    Ok(resid.norm_squared() / p.n() as f64)
}

/// Soft-constraint form `n^{-1}[P − L_{ε,C}(P)]_zz`.
pub fn christoffel_inverse_soft(p: &ProjectorKernel, q: &ChristoffelQuery) -> Result<f64> {
    let eps = q
        .soft_epsilon
        .ok_or_else(|| Error::Precondition("soft_epsilon must be set".into()))?;
    if !(eps > 0.0) {
        return Err(Error::Precondition(format!("soft epsilon must be positive, got {eps}")));
    }
    q.validate(p.n())?;
    let c = &q.exclusion;
    let pz = p.entries()[(q.z, q.z)];
    if c.is_empty() {
        return Ok(pz / p.n() as f64);
    }
    let mut core = linalg::principal_submatrix(p.entries(), c);
    for i in 0..c.len() {
        core[(i, i)] += eps;
    }
    let chol = linalg::cholesky_jittered(&core, "P_CC + εI")?;
    let mut v = DVector::from_fn(c.len(), |i, _| p.entries()[(c[i], q.z)]);
    chol.l().solve_lower_triangular_mut(&mut v);
    Ok((pz - v.norm_squared()) / p.n() as f64)
}

/// Optimum of the finite-dimensional quadratic program behind the Christoffel
/// function: `f = Σ_j α_j k(·, x_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    /// `C_C(x_z)` on the scale of [`christoffel_inverse`], i.e. `n²` times `objective`.
    pub value: f64,
    /// Optimal value of `αᵀMα`.
    pub objective: f64,
    pub alpha: DVector<f64>,
}

/// Solves `min αᵀMα` with `M = n^{-1}(K W K + nγK)` subject to `(Kα)_z = 1` and,
/// for hard constraints, `(Kα)_s = 0` for `s ∈ C`, by a dense KKT solve.
///
/// Weights `W` default to 1, or to `1 + 1/ε` on `C` for soft queries.
pub fn qp_oracle(
    k: &KernelMatrix,
    q: &ChristoffelQuery,
    weights: Option<&[f64]>,
) -> Result<QpSolution> {
    let n = k.n();
    if n > QP_ORACLE_MAX_N {
        return Err(Error::Precondition(format!(
            "qp_oracle is limited to n <= {QP_ORACLE_MAX_N}, got {n}"
        )));
    }
    if !(q.gamma > 0.0) {
        return Err(Error::Precondition(format!("gamma must be positive, got {}", q.gamma)));
    }
    q.validate(n)?;
    let kk = k.entries();
    if nalgebra::Cholesky::new(kk.clone()).is_none() {
        return Err(Error::Precondition("kernel matrix must be positive definite".into()));
    }
    let w: Vec<f64> = match (weights, q.soft_weights(n)) {
        (Some(w), _) => {
            if w.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: w.len() });
            }
            w.to_vec()
        }
        (None, Some(w)) => w,
        (None, None) => vec![1.0; n],
    };
    let hard: &[usize] = if q.soft_epsilon.is_some() { &[] } else { &q.exclusion };

    let nf = n as f64;
    let mut wk = kk.clone();
    for (i, wi) in w.iter().enumerate() {
        wk.row_mut(i).scale_mut(*wi);
    }
    let mut m = (kk * wk + kk * (nf * q.gamma)) / nf;
    linalg::symmetrize(&mut m);

    let constraints: Vec<usize> = std::iter::once(q.z).chain(hard.iter().copied()).collect();
    let r = constraints.len();
    let dim = n + r;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(&(&m * 2.0));
    for (c, &s) in constraints.iter().enumerate() {
        for j in 0..n {
            kkt[(n + c, j)] = kk[(s, j)];
            kkt[(j, n + c)] = kk[(s, j)];
        }
    }
    let mut rhs = DVector::zeros(dim);
    rhs[n] = 1.0;

    let lu = kkt.clone().lu();
    let mut sol = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("KKT system is singular".into()))?;
    // one step of iterative refinement
    let resid = &rhs - &kkt * &sol;
    if let Some(corr) = lu.solve(&resid) {
        sol += corr;
    }
    let alpha = sol.rows(0, n).into_owned();
    let objective = (alpha.transpose() * &m * &alpha)[(0, 0)];
    // αᵀMα equals 1/(n·r_zz) for the residual r of the projector, while
    // christoffel_inverse reports r_zz/n.
    Ok(QpSolution {
        value: objective * nf * nf,
        objective,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projector::projector_kernel;

    fn diag_projector(values: &[f64]) -> ProjectorKernel {
        // K = diag(values) with nγ = 1 gives P = diag(v / (v + 1)).
        let n = values.len();
        let k = KernelMatrix::from_dense(DMatrix::from_diagonal(&DVector::from_row_slice(values)))
            .unwrap();
        projector_kernel(&k, 1.0 / n as f64).unwrap()
    }

    #[test]
    fn empty_exclusion_is_scaled_leverage() {
        let p = diag_projector(&[2.0, 1.0, 0.5]);
        for z in 0..3 {
            let v = christoffel_inverse(&p, &ChristoffelQuery::new(z, vec![], 0.1)).unwrap();
            assert!((v - p.entries()[(z, z)] / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_point_diagonal_case() {
        let k = KernelMatrix::from_dense(DMatrix::identity(2, 2) * 2.0).unwrap();
        let p = projector_kernel(&k, 1.0).unwrap();
        let v = christoffel_inverse(&p, &ChristoffelQuery::new(0, vec![1], 1.0)).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn query_in_exclusion_rejected() {
        let p = diag_projector(&[1.0, 1.0]);
        let q = ChristoffelQuery::new(1, vec![1], 0.5);
        assert!(matches!(christoffel_inverse(&p, &q), Err(Error::Precondition(_))));
        let k = KernelMatrix::from_dense(DMatrix::identity(2, 2)).unwrap();
        assert!(qp_oracle(&k, &q, None).is_err());
        assert!(christoffel_inverse(&p, &ChristoffelQuery::new(5, vec![], 0.5)).is_err());
    }

    #[test]
    fn determinant_form_on_diagonal_projector() {
        let p = diag_projector(&[3.0, 1.0, 0.25, 2.0]);
        let q = ChristoffelQuery::new(2, vec![0, 3], 0.25);
        let det = christoffel_inverse_det(&p, &q).unwrap();
        assert!((det.value - p.entries()[(2, 2)] / 4.0).abs() < 1e-15);
        assert!(christoffel_inverse_det(&p, &ChristoffelQuery::new(2, vec![], 0.25)).is_err());
    }

    #[test]
    fn single_point_determinant_formula() {
        let k = KernelMatrix::from_dense(DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.6, 0.2, 0.6, 1.0, 0.5, 0.2, 0.5, 1.0],
        ))
        .unwrap();
        let p = projector_kernel(&k, 0.05).unwrap();
        let pe = p.entries();
        let (z, s) = (0, 2);
        let direct = (pe[(z, z)] * pe[(s, s)] - pe[(z, s)] * pe[(s, z)]) / pe[(s, s)] / 3.0;
        let q = ChristoffelQuery::new(z, vec![s], 0.05);
        let det = christoffel_inverse_det(&p, &q).unwrap().value;
        assert!((det - direct).abs() <= 1e-12 * direct);
        assert!((christoffel_inverse(&p, &q).unwrap() - direct).abs() <= 1e-12 * direct);
    }

    #[test]
    fn determinant_underflow_reported() {
        let n = 400;
        let p = diag_projector(&vec![0.01; n]);
        let q = ChristoffelQuery::new(n - 1, (0..n - 1).collect(), 0.1);
        assert!(matches!(
            christoffel_inverse_det(&p, &q),
            Err(Error::DeterminantUnderflow(_))
        ));
        // the Schur path is fine
        assert!(christoffel_inverse(&p, &q).unwrap() > 0.0);
    }

    #[test]
    fn soft_limits() {
        let k = KernelMatrix::from_dense(DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.6, 0.2, 0.6, 1.0, 0.5, 0.2, 0.5, 1.0],
        ))
        .unwrap();
        let p = projector_kernel(&k, 0.05).unwrap();
        let pzz = p.entries()[(1, 1)] / 3.0;
        let big = christoffel_inverse_soft(&p, &ChristoffelQuery::new(1, vec![0, 2], 0.05).soft(1e8))
            .unwrap();
        assert!((big - pzz).abs() <= 1e-6 * pzz);
        let empty = christoffel_inverse_soft(&p, &ChristoffelQuery::new(1, vec![], 0.05).soft(0.3))
            .unwrap();
        assert!((empty - pzz).abs() < 1e-15);
        assert!(christoffel_inverse_soft(&p, &ChristoffelQuery::new(1, vec![], 0.05)).is_err());
    }

    #[test]
    fn scalar_qp() {
        let k = KernelMatrix::from_dense(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let gamma = 0.3;
        let sol = qp_oracle(&k, &ChristoffelQuery::new(0, vec![], gamma), None).unwrap();
        assert!((sol.value - (gamma + 1.0)).abs() < 1e-14);
        assert!((sol.alpha[0] - 1.0).abs() < 1e-14);
    }
}
