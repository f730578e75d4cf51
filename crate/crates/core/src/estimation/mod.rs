//! Perturbed regularized MLE: `θ̂ = argmin L(θ; x, w)` under linear
//! constraints or with an ℓ1 penalty, plus its SSOSP certificate.

mod enet;
mod mixture;
mod pava;
mod qp;

pub use enet::{cd_quadratic_l1, l1_kkt_residual, l1_objective, solve_elastic_net_cd, CdOptions, CdResult};
pub use mixture::{em_init, BoxBounds, PI_CLIP, SD_FLOOR};
pub use pava::solve_pava;
pub use qp::{solve_activeset_qp, QpOptions, QpSolution};

use serde::{Deserialize, Serialize};

use crate::certificate::{certify_constrained, certify_penalized, SsospCertificate, Tolerances};
use crate::constraints::{Builtin, ConstraintSet};
use crate::error::{invalid, AcssError, Result};
use crate::model::{GaussianLinear, Model, Perturbation, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    ActivesetQp,
    Pava,
    CoordinateDescent,
    ProjectedGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Iteration budget for the mixture solver.
    pub max_iter: usize,
    /// EM iterations used to build the mixture starting point.
    pub em_iters: usize,
    pub qp: QpOptions,
    pub cd: CdOptions,
    pub tolerances: Tolerances,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iter: 200,
            em_iters: 20,
            qp: QpOptions::default(),
            cd: CdOptions::default(),
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    Constrained(ConstraintSet),
    L1Penalized { lambda: f64 },
}

#[derive(Debug, Clone)]
pub struct EstimationProblem {
    pub model: Model,
    pub mode: Mode,
    pub solver: SolverKind,
    pub options: SolverOptions,
    /// Fixed starting point for the mixture solver; EM-based when absent.
    pub init: Option<Vector>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub certificate: SsospCertificate,
    pub iterations: usize,
    /// Solver reached its own stopping rule and the KKT check passed.
    pub converged: bool,
    /// `L(θ̂; x, w)`, plus `λ‖θ̂‖₁` in penalized mode.
    pub objective: f64,
}

impl FitResult {
    pub fn is_ssosp(&self) -> bool {
        self.converged && self.certificate.is_ssosp()
    }
    pub fn theta(&self) -> &Vector {
        &self.certificate.theta_hat
    }
    pub fn g_hat(&self) -> &Vector {
        &self.certificate.g_hat
    }
}

fn is_monotone(cs: &ConstraintSet) -> bool {
    cs.dim() >= 2
        && ConstraintSet::builtin(&Builtin::Monotone, cs.dim()).is_ok_and(|m| m.a() == cs.a() && m.b() == cs.b())
}

impl EstimationProblem {
    pub fn new(model: Model, mode: Mode, solver: SolverKind, options: SolverOptions) -> Result<Self> {
        let d = model.dim();
        match &mode {
            Mode::Constrained(cs) if cs.dim() != d => {
                return Err(invalid("constraint dimension differs from model dimension"))
            }
            Mode::L1Penalized { lambda } if !(*lambda > 0.0 && lambda.is_finite()) => {
                return Err(invalid("l1 penalty must be positive"))
            }
            _ => {}
        }
        let gaussian = model.as_gaussian();
        match (solver, &mode) {
            (SolverKind::ActivesetQp, Mode::Constrained(_)) if gaussian.is_some() => {}
            (SolverKind::Pava, Mode::Constrained(cs)) => {
                let ok = gaussian.is_some_and(GaussianLinear::is_identity_design) && is_monotone(cs);
                if !ok {
                    return Err(invalid("pava needs a Gaussian identity design with the monotone constraint"));
                }
            }
            (SolverKind::CoordinateDescent, Mode::L1Penalized { .. }) if gaussian.is_some() => {}
            (SolverKind::ProjectedGradient, Mode::Constrained(cs)) if matches!(model, Model::Mixture2(_)) => {
                BoxBounds::for_mixture(cs)?;
            }
            (s, _) => return Err(invalid(format!("solver {s:?} does not apply to this model and mode"))),
        }
        Ok(EstimationProblem { model, mode, solver, options, init: None })
    }

    pub fn with_init(mut self, init: Vector) -> Self {
        self.init = Some(init);
        self
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.options.tolerances
    }
}

/// Fit `θ̂(x, w)`. Deterministic: the same inputs always give the same
/// output bits, which the membership check relies on.
pub fn fit(problem: &EstimationProblem, x: &Vector, w: &Perturbation) -> Result<FitResult> {
    let model = &problem.model;
    model.check_data(x)?;
    if w.values.len() != model.dim() {
        return Err(invalid("perturbation length differs from model dimension"));
    }
    let tol = &problem.options.tolerances;
    match (&problem.mode, model) {
        (Mode::Constrained(cs), Model::GaussianLinear(g)) => {
            let (theta, iterations, solver_ok) = match problem.solver {
                SolverKind::Pava => {
                    let a = 1.0 / g.nu2() + g.ridge();
                    let y: Vec<f64> = (0..x.len()).map(|i| (x[i] / g.nu2() - w.sigma * w.values[i]) / a).collect();
                    (Vector::from_vec(solve_pava(&y)), 1, true)
                }
                _ => {
                    let h = g.hessian();
                    let c = -(g.z().transpose() * x) / g.nu2() + w.scaled();
                    let sol = solve_activeset_qp(&h, &c, cs, &problem.options.qp)?;
                    (sol.theta, sol.iterations, sol.converged)
                }
            };
            let ev = model.loss(&theta, x, w)?;
            let certificate = certify_constrained(cs, &theta, &ev.gradient, &ev.hessian, tol);
            Ok(FitResult { converged: solver_ok && certificate.kkt_ok, certificate, iterations, objective: ev.value })
        }
        (Mode::L1Penalized { lambda }, Model::GaussianLinear(g)) => {
            let r = solve_elastic_net_cd(g.z(), x, g.nu2(), g.ridge(), *lambda, &w.scaled(), &problem.options.cd)?;
            let ev = model.loss(&r.theta, x, w)?;
            let certificate = certify_penalized(*lambda, &r.theta, &ev.gradient, &ev.hessian, tol);
            let objective = ev.value + lambda * r.theta.iter().map(|v| v.abs()).sum::<f64>();
            Ok(FitResult { converged: r.converged && certificate.kkt_ok, certificate, iterations: r.sweeps, objective })
        }
        (Mode::Constrained(cs), Model::Mixture2(_)) => {
            let bounds = BoxBounds::for_mixture(cs)?;
            let init = match &problem.init {
                Some(t) => {
                    model.check_param(t)?;
                    if !cs.is_feasible(t, tol.act) {
                        return Err(invalid("mixture starting point violates the constraints"));
                    }
                    t.clone()
                }
                None => em_init(x, &bounds, problem.options.em_iters),
            };
            let out = mixture::projected_newton(model, &bounds, x, w, init, &problem.options)?;
            let ev = &out.eval;
            let certificate = certify_constrained(cs, &out.theta, &ev.gradient, &ev.hessian, tol);
            Ok(FitResult {
                converged: out.converged && certificate.kkt_ok,
                certificate,
                iterations: out.iterations,
                objective: ev.value,
            })
        }
        (Mode::L1Penalized { .. }, Model::Mixture2(_)) => {
            Err(AcssError::Unsupported("l1-penalized mixture fits are not implemented".into()))
        }
    }
}

/// The mixture fit with `σ_j ≥ lower_sd` on both component scales.
pub fn fit_mixture_constrained(
    x: &Vector,
    w: &Perturbation,
    lower_sd: f64,
    init: Option<Vector>,
    options: &SolverOptions,
) -> Result<FitResult> {
    if !(lower_sd > 0.0) {
        return Err(invalid("lower_sd must be positive"));
    }
    let problem = mixture_problem(x.len(), lower_sd, *options)?;
    let problem = match init {
        Some(t) => problem.with_init(t),
        None => problem,
    };
    fit(&problem, x, w)
}

pub fn mixture_problem(n: usize, lower_sd: f64, options: SolverOptions) -> Result<EstimationProblem> {
    let cs = ConstraintSet::builtin(&Builtin::LowerBound { c: lower_sd, indices: Some(vec![2, 4]) }, 5)?;
    EstimationProblem::new(Model::mixture2(n)?, Mode::Constrained(cs), SolverKind::ProjectedGradient, options)
}
