//! Nyström landmark selection with regularized Christoffel functions.
//!
//! The crate provides the projector kernel `P = K(K + nγI)^{-1}` and its
//! leverage scores, constrained Christoffel-function values in several
//! equivalent forms, the deterministic (greedy) and randomized (single-pass,
//! adaptive) landmark samplers with their theoretical bound calculators, a
//! random-Fourier-feature path for larger data sets, and an experiment
//! harness used by the `landmarks` binary.

pub mod christoffel;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod lambert;
pub mod linalg;
pub mod projector;
pub mod rff;
pub mod samplers;
pub mod source;
pub mod synth;

pub use christoffel::{
    christoffel_inverse, christoffel_inverse_det, christoffel_inverse_projection,
    christoffel_inverse_soft, qp_oracle, ChristoffelQuery, QpSolution,
};
pub use dataset::{standardize, Dataset};
pub use error::{Error, Result};
pub use kernel::{kernel_cross, kernel_eval, kernel_matrix, KernelFamily, KernelMatrix, KernelSpec};
pub use projector::{
    effective_dimension, error_frobenius_subsets, error_max_norm, error_operator_norm,
    leverage_scores, nystrom, projector_kernel, residual_diagonal, LandmarkSet, NystromApprox,
    ProjectorKernel,
};
pub use rff::{approx_projector, approx_ras, featurize, rff_build, ApproxProjector, RffMap};
pub use samplers::{
    das_bound, das_sample, ras_sample, rls_sample, uniform_sample, DasTrace, RasParams, RasTrace,
};
pub use source::MatrixSource;
