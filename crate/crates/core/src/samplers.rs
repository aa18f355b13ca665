//! Landmark selection: deterministic adaptive sampling (greedy maximization of
//! the Christoffel-function inverse), randomized adaptive sampling (single pass
//! with adaptively updated ridge-leverage-type scores), and the uniform and
//! ridge-leverage-score baselines.

use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelMatrix;
use crate::lambert;
use crate::linalg::{self, CoreInverse, IncrementalCholesky};
use crate::projector::{leverage_scores, nystrom, LandmarkSet, ProjectorKernel, PsdGapReport};
use crate::source::MatrixSource;

/// Default accuracy parameter `t` of the randomized sampler.
pub const DEFAULT_T: f64 = 0.5;

/// Number of accepted landmarks after which the explicit core inverse is rebuilt.
pub const WOODBURY_REFRESH: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DasTrace {
    pub landmarks: LandmarkSet,
    /// `residual_max[m]` is the largest diagonal entry of the projector residual
    /// after `m` landmarks; for `m < k` it is attained at the next landmark.
    pub residual_max: Vec<f64>,
    /// Convergence bound for `m` landmarks, defined for `2 ≤ m < n`.
    pub bounds: Vec<Option<f64>>,
}

fn argmax_unselected(r: &[f64], selected: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in r.iter().enumerate() {
        if selected[i] {
            continue;
        }
        match best {
            Some(b) if !(v > r[b]) => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Greedy selection of `k` landmarks maximizing the projector residual diagonal.
///
/// The residual is maintained by a pivoted partial Cholesky factorization of
/// `P`: each selection appends one column, costing `O(n·m)` at step `m`.
/// Ties go to the lowest index.
pub fn das_sample(p: &ProjectorKernel, k: usize) -> Result<DasTrace> {
    let n = p.n();
    if k == 0 || k > n {
        return Err(Error::Precondition(format!("need 1 <= k <= n = {n}, got k = {k}")));
    }
    let pe = p.entries();
    let mut residual: Vec<f64> = (0..n).map(|i| pe[(i, i)]).collect();
    let mut selected = vec![false; n];
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut indices = Vec::with_capacity(k);
    let mut residual_max = Vec::with_capacity(k + 1);

    for _ in 0..k {
        let s = argmax_unselected(&residual, &selected).expect("k <= n");
        let pivot = residual[s];
        residual_max.push(pivot);
        selected[s] = true;
        indices.push(s);
        if !(pivot > 0.0) {
            log::debug!("DAS: residual exhausted at pivot {pivot:.3e}; index {s} adds no information");
            residual[s] = 0.0;
            continue;
        }
        let inv = 1.0 / pivot.sqrt();
        let mut g: Vec<f64> = (0..n).map(|i| pe[(i, s)]).collect();
        for col in &columns {
            let cs = col[s];
            for (gi, ci) in g.iter_mut().zip(col) {
                *gi -= ci * cs;
            }
        }
        for (ri, gi) in residual.iter_mut().zip(g.iter_mut()) {
            *gi *= inv;
            *ri -= *gi * *gi;
        }
        columns.push(g);
    }
    residual_max.push(residual.iter().copied().fold(f64::NEG_INFINITY, f64::max));

    let bounds = (0..=k).map(|m| das_bound(p, m).ok()).collect();
    Ok(DasTrace {
        landmarks: LandmarkSet::new(indices)?,
        residual_max,
        bounds,
    })
}

/// `2‖P‖_∞ Λ_{⌊m/2⌋+1}^{1/2}`, valid for `2 ≤ m < n`.
pub fn das_bound(p: &ProjectorKernel, m: usize) -> Result<f64> {
    let n = p.n();
    if m < 2 || m >= n {
        return Err(Error::Precondition(format!(
            "convergence bound needs 2 <= m < n = {n}, got m = {m}"
        )));
    }
    let max_entry = linalg::max_abs(p.entries());
    let lam = p.spectrum()[m / 2].max(0.0);
    Ok(2.0 * max_entry * lam.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasParams {
    pub epsilon: f64,
    /// Oversampling factor.
    pub c: f64,
    pub t: f64,
}

impl RasParams {
    pub fn new(epsilon: f64, c: f64) -> Self {
        Self {
            epsilon,
            c,
            t: DEFAULT_T,
        }
    }

    pub fn with_t(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Precondition(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Precondition(format!("c must be positive, got {}", self.c)));
        }
        if !(self.t >= 0.0 && self.t.is_finite()) {
            return Err(Error::Precondition(format!("t must be >= 0, got {}", self.t)));
        }
        Ok(())
    }
}

/// One step of the randomized pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasVisit {
    pub index: usize,
    /// `s_i`, the ε-regularized residual score given the landmarks so far.
    pub score: f64,
    /// `min{1, (1+t)s_i}`
    pub clipped: f64,
    /// `min{1, c·clipped}`
    pub probability: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasTrace {
    pub landmarks: LandmarkSet,
    pub visits: Vec<RasVisit>,
    pub params: RasParams,
}

/// How the core `(SᵀPS + εI)` is kept up to date across acceptances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum CoreUpdate {
    Cholesky,
    Woodbury,
}

enum Core {
    Cholesky(IncrementalCholesky),
    Woodbury(CoreInverse),
}

/// Single pass over `0..n` with acceptance probabilities computed from the
/// prefix of accepted landmarks only. One uniform draw is consumed per index.
pub(crate) fn ras_pass<A: MatrixSource + ?Sized>(
    source: &A,
    params: RasParams,
    seed: u64,
    update: CoreUpdate,
) -> Result<RasTrace> {
    params.validate()?;
    let n = source.n();
    let eps = params.epsilon;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut core = match update {
        CoreUpdate::Cholesky => Core::Cholesky(IncrementalCholesky::new()),
        CoreUpdate::Woodbury => Core::Woodbury(CoreInverse::new()),
    };
    let mut accepted: Vec<usize> = Vec::new();
    let mut scales: Vec<f64> = Vec::new();
    let mut probs: Vec<f64> = Vec::new();
    let mut visits = Vec::with_capacity(n);

    for i in 0..n {
        let pii = source.diag(i);
        // v = SᵀP e_i
        let v: Vec<f64> = accepted
            .iter()
            .zip(&scales)
            .map(|(&j, sj)| source.entry(j, i) * sj)
            .collect();
        let (quad, y) = match &core {
            Core::Cholesky(ch) => {
                let y = ch.forward_solve(&v);
                (y.iter().map(|a| a * a).sum::<f64>(), Some(y))
            }
            Core::Woodbury(inv) => (inv.quad_form(&v), None),
        };
        let score = ((pii - quad) / eps).max(0.0);
        let clipped = (1.0 + params.t) * score;
        let clipped = clipped.min(1.0);
        let probability = (params.c * clipped).min(1.0);
        let u: f64 = rng.random();
        let take = u < probability;
        visits.push(RasVisit {
            index: i,
            score,
            clipped,
            probability,
            accepted: take,
        });
        if !take {
            continue;
        }
        let scale = 1.0 / probability.sqrt();
        let diag = pii / probability + eps;
        match &mut core {
            Core::Cholesky(ch) => {
                let y: Vec<f64> = y.expect("cholesky path").iter().map(|a| a * scale).collect();
                ch.append(y, diag)?;
            }
            Core::Woodbury(inv) => {
                let c: Vec<f64> = v.iter().map(|a| a * scale).collect();
                inv.append(&c, diag)?;
            }
        }
        accepted.push(i);
        scales.push(scale);
        probs.push(probability);
        if let Core::Woodbury(inv) = &mut core {
            if accepted.len() % WOODBURY_REFRESH == 0 {
                inv.refresh(&core_matrix(source, &accepted, &scales, eps))?;
            }
        }
    }
    Ok(RasTrace {
        landmarks: LandmarkSet::with_probabilities(accepted, probs)?,
        visits,
        params,
    })
}

/// `SᵀAS + εI` for weighted landmarks.
pub fn core_matrix<A: MatrixSource + ?Sized>(
    source: &A,
    indices: &[usize],
    scales: &[f64],
    epsilon: f64,
) -> DMatrix<f64> {
    let m = indices.len();
    DMatrix::from_fn(m, m, |a, b| {
        let v = source.entry(indices[a], indices[b]) * scales[a] * scales[b];
        if a == b {
            v + epsilon
        } else {
            v
        }
    })
}

/// Randomized adaptive sampling on the exact projector kernel.
pub fn ras_sample(p: &ProjectorKernel, params: RasParams, seed: u64) -> Result<RasTrace> {
    ras_pass(p, params, seed, CoreUpdate::Cholesky)
}

/// Lower bound on `c` for the randomized sampler's guarantee with failure probability `δ`,
/// with the effective dimension evaluated at `εnγ/(1+ε)`.
pub fn oversampling_for(p: &ProjectorKernel, epsilon: f64, delta: f64) -> Result<f64> {
    let d_eff = p.kernel_effective_dimension(epsilon * p.gamma() / (1.0 + epsilon));
    lambert::oversampling_lower_bound(epsilon, delta, d_eff)
}

/// `k` distinct indices drawn uniformly without replacement.
pub fn uniform_sample(n: usize, k: usize, seed: u64) -> Result<LandmarkSet> {
    if k > n {
        return Err(Error::Precondition(format!("k = {k} exceeds n = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    LandmarkSet::new(rand::seq::index::sample(&mut rng, n, k).into_vec())
}

/// `k` distinct indices by sequential draws proportional to `weights`,
/// renormalizing over the remaining indices after each draw. Once the
/// remaining weight is zero the rest are drawn uniformly.
pub fn sample_proportional(weights: &[f64], k: usize, seed: u64) -> Result<LandmarkSet> {
    let n = weights.len();
    if k > n {
        return Err(Error::Precondition(format!("k = {k} exceeds n = {n}")));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
        return Err(Error::Precondition(format!("sampling weight {w} is not a finite non-negative number")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = weights.to_vec();
    let mut taken = vec![false; n];
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let total: f64 = w.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, wi) in w.iter().enumerate() {
                if *wi <= 0.0 {
                    continue;
                }
                acc += wi;
                chosen = Some(i);
                if target < acc {
                    break;
                }
            }
            chosen.expect("positive total")
        } else {
            let remaining: Vec<usize> = (0..n).filter(|i| !taken[*i]).collect();
            remaining[rng.random_range(0..remaining.len())]
        };
        taken[pick] = true;
        w[pick] = 0.0;
        out.push(pick);
    }
    LandmarkSet::new(out)
}

/// Ridge leverage score sampling of `k` distinct landmarks.
pub fn rls_sample(p: &ProjectorKernel, k: usize, seed: u64) -> Result<LandmarkSet> {
    let scores: Vec<f64> = leverage_scores(p).iter().map(|v| v.max(0.0)).collect();
    sample_proportional(&scores, k, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma4Report {
    /// `λ_max(ΨΨᵀ − ΨSSᵀΨᵀ)`
    pub deviation: f64,
    pub t: f64,
    pub premise_holds: bool,
    /// Present only when the premise holds.
    pub psd: Option<PsdGapReport>,
}

/// If `λ_max(ΨΨᵀ − ΨSSᵀΨᵀ) ≤ t`, checks
/// `K − L_{εnγ/(1+ε),S}(K) ⪯ εnγ/(1−t(1+ε)) · P_ε(P)` on dense matrices.
pub fn check_lemma4(
    p: &ProjectorKernel,
    k: &KernelMatrix,
    landmarks: &LandmarkSet,
    epsilon: f64,
    t: f64,
) -> Result<Lemma4Report> {
    if !(epsilon > 0.0) || !(t > 0.0 && t < 1.0 / (1.0 + epsilon)) {
        return Err(Error::Precondition(format!(
            "need epsilon > 0 and 0 < t < 1/(1+epsilon), got epsilon = {epsilon}, t = {t}"
        )));
    }
    let n = p.n();
    let psi = p.psi_factor(epsilon);
    let s = landmarks.sampling_matrix(n);
    let psi_s = &psi * s;
    let mut dev = &psi * psi.transpose() - &psi_s * psi_s.transpose();
    linalg::symmetrize(&mut dev);
    let deviation = linalg::lambda_max(&dev);
    let premise_holds = deviation <= t;
    let psd = if premise_holds {
        let ngamma = n as f64 * p.gamma();
        let mu = epsilon * ngamma / (1.0 + epsilon);
        let lk = nystrom(k, landmarks, mu)?.to_dense();
        let rhs = p.filtered_projector(epsilon) * (epsilon * ngamma / (1.0 - t * (1.0 + epsilon)));
        let mut gap = rhs - (k.entries() - lk);
        linalg::symmetrize(&mut gap);
        let min_eigenvalue = linalg::lambda_min(&gap);
        let tolerance = 1e-8 * linalg::lambda_max(k.entries());
        Some(PsdGapReport {
            min_eigenvalue,
            tolerance,
            holds: min_eigenvalue >= -tolerance,
        })
    } else {
        None
    };
    Ok(Lemma4Report {
        deviation,
        t,
        premise_holds,
        psd,
    })
}

/// Spectral error of one randomized run against its guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuaranteeCheck {
    /// `‖K − L_{εnγ/(1+ε),S}(K)‖₂`
    pub error: f64,
    /// `2εnγ/(1−ε)`
    pub bound: f64,
    pub holds: bool,
}

pub fn check_ras_guarantee(
    k: &KernelMatrix,
    gamma: f64,
    trace: &RasTrace,
) -> Result<GuaranteeCheck> {
    let eps = trace.params.epsilon;
    let ngamma = k.n() as f64 * gamma;
    let approx = nystrom(k, &trace.landmarks, eps * ngamma / (1.0 + eps))?;
    let mut residual = k.entries() - approx.to_dense();
    linalg::symmetrize(&mut residual);
    let error = linalg::sym_spectral_norm(&residual);
    let bound = 2.0 * eps * ngamma / (1.0 - eps);
    Ok(GuaranteeCheck {
        error,
        bound,
        holds: error <= bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projector::projector_kernel;

    fn two_i() -> ProjectorKernel {
        let k = KernelMatrix::from_dense(DMatrix::identity(2, 2) * 2.0).unwrap();
        projector_kernel(&k, 1.0).unwrap()
    }

    #[test]
    fn das_tie_break_lowest_index() {
        let trace = das_sample(&two_i(), 2).unwrap();
        assert_eq!(trace.landmarks.indices(), &[0, 1]);
        assert!(das_sample(&two_i(), 3).is_err());
        assert!(das_sample(&two_i(), 0).is_err());
    }

    #[test]
    fn das_first_pick_is_max_leverage() {
        let k = KernelMatrix::from_dense(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            0.5, 3.0, 1.0, 3.0,
        ])))
        .unwrap();
        let p = projector_kernel(&k, 0.25).unwrap();
        let trace = das_sample(&p, 1).unwrap();
        assert_eq!(trace.landmarks.indices(), &[1]);
    }

    #[test]
    fn bound_formula_and_range() {
        assert!(das_bound(&two_i(), 2).is_err());
        // P = diag(0.9, 0.5, 0.1): K = diag(λ) with λ/(λ+nγ) = target, nγ = 1.
        let lam: Vec<f64> = [0.9, 0.5, 0.1].iter().map(|t| t / (1.0 - t)).collect();
        let k = KernelMatrix::from_dense(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lam)))
            .unwrap();
        let p = projector_kernel(&k, 1.0 / 3.0).unwrap();
        let b = das_bound(&p, 2).unwrap();
        assert!((b - 2.0 * 0.9 * 0.5f64.sqrt()).abs() < 1e-12);
        assert!(das_bound(&p, 3).is_err());
        assert!(das_bound(&p, 1).is_err());
    }

    #[test]
    fn ras_first_visit_and_saturation() {
        let p = two_i();
        let trace = ras_sample(&p, RasParams::new(0.1, 0.7), 3).unwrap();
        let first = trace.visits[0];
        assert!((first.score - 5.0).abs() < 1e-12);
        assert_eq!(first.clipped, 1.0);
        assert!((first.probability - 0.7).abs() < 1e-15);

        let trace = ras_sample(&p, RasParams::new(0.1, 1e6), 3).unwrap();
        assert_eq!(trace.landmarks.indices(), &[0, 1]);
        assert!(ras_sample(&p, RasParams::new(1.0, 1.0), 0).is_err());
        assert!(ras_sample(&p, RasParams::new(0.5, 0.0), 0).is_err());
    }

    #[test]
    fn uniform_edge_cases() {
        let all = uniform_sample(7, 7, 1).unwrap();
        let mut idx = all.indices().to_vec();
        idx.sort();
        assert_eq!(idx, (0..7).collect::<Vec<_>>());
        assert_eq!(uniform_sample(1, 1, 9).unwrap().indices(), &[0]);
        assert!(uniform_sample(3, 4, 0).is_err());
    }

    #[test]
    fn proportional_edge_cases() {
        let mut idx = sample_proportional(&[0.2, 0.0, 0.5, 0.3], 4, 2).unwrap().indices().to_vec();
        idx.sort();
        assert_eq!(idx, vec![0, 1, 2, 3]);
        assert!(sample_proportional(&[1.0, -1.0], 1, 0).is_err());
        assert!(sample_proportional(&[1.0], 2, 0).is_err());
        let mut idx = rls_sample(&two_i(), 2, 5).unwrap().indices().to_vec();
        idx.sort();
        assert_eq!(idx, vec![0, 1]);
    }

    #[test]
    fn lemma4_precondition() {
        let p = two_i();
        let k = KernelMatrix::from_dense(DMatrix::identity(2, 2) * 2.0).unwrap();
        assert!(check_lemma4(&p, &k, &LandmarkSet::empty(), 0.5, 0.7).is_err());
        let r = check_lemma4(&p, &k, &LandmarkSet::empty(), 0.5, 0.5).unwrap();
        // Ψ rows: Λ/(Λ+ε) = 0.5 on both eigen-directions
        assert!((r.deviation - 0.5).abs() < 1e-12);
    }
}
