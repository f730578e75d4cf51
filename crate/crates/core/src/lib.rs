//! Approximate co-sufficient sampling (aCSS) goodness-of-fit tests.
//!
//! Fit a randomly perturbed regularized MLE, certify it as a strict
//! second-order stationary point, draw copies of the data from the plug-in
//! conditional law given the fit, and compare a test statistic on the data
//! against the copies.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod certificate;
pub mod conditional;
pub mod constraints;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod inference;
pub mod model;
pub mod nnls;
pub mod rng;
pub mod samplers;

pub use certificate::{check_ssosp_constrained, check_ssosp_penalized, SsospCertificate, Structure, Tolerances};
pub use conditional::{ConditioningState, LogDensityValue};
pub use constraints::{ActiveSet, Builtin, ConstraintSet, OrthoBasis};
pub use error::{AcssError, Result};
pub use estimation::{fit, EstimationProblem, FitResult, Mode, SolverKind, SolverOptions};
pub use experiments::{run_experiment, run_trial, ExperimentConfig, ExperimentKind, Method, TrialResult};
pub use inference::{compute_pvalue, h_v_bound, h_v_mc, v_sparsity, PValue, SparsityBasis, Statistic};
pub use model::{draw_perturbation, LossEvaluation, Matrix, Model, Perturbation, Vector};
pub use samplers::{chain_length, hub_and_spoke, sample_exact_gaussian, tune_proposal_size, CopySet};
