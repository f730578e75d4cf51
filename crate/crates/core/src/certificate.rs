//! Strict second-order stationarity checks for the constrained and the
//! ℓ1-penalized problems.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::constraints::{ActiveSet, ConstraintSet, OrthoBasis};
use crate::error::{invalid, Result};
use crate::model::{Matrix, Model, Perturbation, Vector};
use crate::nnls::nnls;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Slack below which a row counts as active.
    pub act: f64,
    /// KKT residual allowed per unit of `1 + ‖∇L‖`.
    pub kkt_rel: f64,
    /// Smallest admissible eigenvalue of the projected Hessian.
    pub pd: f64,
    /// Magnitude below which a coordinate is outside the support.
    pub supp: f64,
    /// Refit distance allowed per unit of `1 + ‖θ̂‖` in membership checks.
    pub member_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { act: 1e-8, kkt_rel: 1e-6, pd: 1e-8, supp: 1e-10, member_rel: 1e-6 }
    }
}

impl Tolerances {
    pub fn kkt(&self, grad_norm: f64) -> f64 {
        self.kkt_rel * (1.0 + grad_norm)
    }
    pub fn member(&self, theta_norm: f64) -> f64 {
        self.member_rel * (1.0 + theta_norm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Structure {
    Constrained { active: ActiveSet, basis: OrthoBasis },
    Penalized { support: Vec<usize>, lambda: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsospCertificate {
    pub theta_hat: Vector,
    /// `∇L(θ̂; x, w)`, noise term included.
    pub g_hat: Vector,
    pub structure: Structure,
    /// λ (one per constraint row, zero off the active set) or the
    /// subgradient vector s (one per coordinate).
    pub multipliers: Vector,
    pub feasible: bool,
    pub kkt_ok: bool,
    pub second_order_ok: bool,
    pub kkt_residual: f64,
    /// `+∞` when the restricted Hessian is 0 × 0.
    pub min_proj_hess_eig: f64,
}

impl SsospCertificate {
    pub fn is_ssosp(&self) -> bool {
        self.feasible && self.kkt_ok && self.second_order_ok
    }

    /// Active rows (constrained) or support (penalized).
    pub fn pattern(&self) -> &[usize] {
        match &self.structure {
            Structure::Constrained { active, .. } => &active.indices,
            Structure::Penalized { support, .. } => support,
        }
    }
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

pub fn restrict(h: &Matrix, idx: &[usize]) -> Matrix {
    Matrix::from_fn(idx.len(), idx.len(), |a, b| h[(idx[a], idx[b])])
}

/// Certificate from a precomputed gradient and Hessian of the full loss.
pub fn certify_constrained(
    cs: &ConstraintSet,
    theta: &Vector,
    grad: &Vector,
    hess: &Matrix,
    tol: &Tolerances,
) -> SsospCertificate {
    let slack = cs.slack(theta);
    let feasible = slack.iter().all(|&s| s >= -tol.act);
    let active = ActiveSet::from_slack(&slack, tol.act);
    let d = cs.dim();
    let k = active.indices.len();

    // min ‖∇L + A_𝒜ᵀλ‖ over λ ≥ 0
    let at = Matrix::from_fn(d, k, |j, c| cs.a()[(active.indices[c], j)]);
    let (lam, kkt_residual) = nnls(&at, &(-grad));
    let mut multipliers = Vector::zeros(cs.n_rows());
    for (c, &i) in active.indices.iter().enumerate() {
        multipliers[i] = lam[c];
    }
    let kkt_ok = kkt_residual <= tol.kkt(grad.norm());

    let basis = cs.ortho_complement(&active);
    let proj = basis.u.transpose() * hess * &basis.u;
    let min_eig = min_eigenvalue(&proj);
    SsospCertificate {
        theta_hat: theta.clone(),
        g_hat: grad.clone(),
        structure: Structure::Constrained { active, basis },
        multipliers,
        feasible,
        kkt_ok,
        second_order_ok: min_eig >= tol.pd,
        kkt_residual,
        min_proj_hess_eig: min_eig,
    }
}

pub fn check_ssosp_constrained(
    model: &Model,
    cs: &ConstraintSet,
    theta: &Vector,
    x: &Vector,
    w: &Perturbation,
    tol: &Tolerances,
) -> Result<SsospCertificate> {
    if cs.dim() != model.dim() {
        return Err(invalid("constraint dimension differs from model dimension"));
    }
    let ev = model.loss(theta, x, w)?;
    Ok(certify_constrained(cs, theta, &ev.gradient, &ev.hessian, tol))
}

pub fn certify_penalized(
    lambda: f64,
    theta: &Vector,
    grad: &Vector,
    hess: &Matrix,
    tol: &Tolerances,
) -> SsospCertificate {
    let support: Vec<usize> = (0..theta.len()).filter(|&j| theta[j].abs() > tol.supp).collect();
    let mut s = Vector::zeros(theta.len());
    let mut residual: f64 = 0.0;
    for j in 0..theta.len() {
        if theta[j].abs() > tol.supp {
            s[j] = theta[j].signum();
            residual = residual.max((grad[j] + lambda * s[j]).abs());
        } else {
            s[j] = (-grad[j] / lambda).clamp(-1.0, 1.0);
            residual = residual.max(grad[j].abs() - lambda);
        }
    }
    let min_eig = min_eigenvalue(&restrict(hess, &support));
    SsospCertificate {
        theta_hat: theta.clone(),
        g_hat: grad.clone(),
        structure: Structure::Penalized { support, lambda },
        multipliers: s,
        feasible: true,
        kkt_ok: residual <= tol.kkt(grad.norm()),
        second_order_ok: min_eig >= tol.pd,
        kkt_residual: residual.max(0.0),
        min_proj_hess_eig: min_eig,
    }
}

pub fn check_ssosp_penalized(
    model: &Model,
    lambda: f64,
    theta: &Vector,
    x: &Vector,
    w: &Perturbation,
    tol: &Tolerances,
) -> Result<SsospCertificate> {
    if !(lambda > 0.0) {
        return Err(invalid("l1 penalty must be positive"));
    }
    let ev = model.loss(theta, x, w)?;
    Ok(certify_penalized(lambda, theta, &ev.gradient, &ev.hessian, tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::Builtin;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    fn seq_model(n: usize) -> Model {
        Model::gaussian_linear(Matrix::identity(n, n), 1.0, 0.0).unwrap()
    }

    #[test]
    fn unconstrained_minimizer_passes() {
        let z = Matrix::from_row_slice(3, 2, &[1.0, 0.5, -0.2, 1.0, 0.3, 0.3]);
        let model = Model::gaussian_linear(z.clone(), 1.0, 0.0).unwrap();
        let x = v(&[1.0, -0.5, 2.0]);
        let w = Perturbation::new(v(&[0.1, -0.3]), 2.0).unwrap();
        let theta = (z.transpose() * &z).cholesky().unwrap().solve(&(z.transpose() * &x - w.scaled()));
        let cert =
            check_ssosp_constrained(&model, &ConstraintSet::unconstrained(2), &theta, &x, &w, &Tolerances::default())
                .unwrap();
        assert!(cert.is_ssosp());
        assert!(cert.g_hat.norm() < 1e-12);
    }

    #[test]
    fn isotonic_multipliers_are_block_cumulative_sums() {
        // θ = pooled means of y = (1, 3, 2, 4): blocks {0}, {1, 2}, {3}
        let model = seq_model(4);
        let cs = ConstraintSet::builtin(&Builtin::Monotone, 4).unwrap();
        let y = v(&[1.0, 3.0, 2.0, 4.0]);
        let theta = v(&[1.0, 2.5, 2.5, 4.0]);
        let w = Perturbation::zero(4, 1.0).unwrap();
        let cert = check_ssosp_constrained(&model, &cs, &theta, &y, &w, &Tolerances::default()).unwrap();
        assert!(cert.is_ssosp());
        // ĝ_i = θ_i − y_i and λ_i = −Σ_{j ≤ i in block} ĝ_j
        let g = &theta - &y;
        assert!((cert.multipliers[1] + g[1]).abs() < 1e-12);
        assert_eq!(cert.multipliers[0], 0.0);
        assert_eq!(cert.multipliers[2], 0.0);
        assert_eq!(cert.pattern(), &[1]);
    }

    #[test]
    fn infeasible_and_nonstationary_points_fail() {
        let model = seq_model(2);
        let cs = ConstraintSet::builtin(&Builtin::Nonnegativity, 2).unwrap();
        let w = Perturbation::zero(2, 1.0).unwrap();
        let x = v(&[-1.0, 1.0]);
        let bad = check_ssosp_constrained(&model, &cs, &v(&[-1e-3, 1.0]), &x, &w, &Tolerances::default()).unwrap();
        assert!(!bad.feasible);
        let good = check_ssosp_constrained(&model, &cs, &v(&[0.0, 1.0]), &x, &w, &Tolerances::default()).unwrap();
        assert!(good.is_ssosp());
        assert!((good.multipliers[0] - 1.0).abs() < 1e-12);
        let moved = check_ssosp_constrained(&model, &cs, &v(&[0.0, 1.001]), &x, &w, &Tolerances::default()).unwrap();
        assert!(moved.feasible && !moved.kkt_ok);
    }

    #[test]
    fn lasso_soft_threshold_passes() {
        let model = seq_model(1);
        let w = Perturbation::zero(1, 1.0).unwrap();
        let x = v(&[3.0]);
        let cert = check_ssosp_penalized(&model, 1.0, &v(&[2.0]), &x, &w, &Tolerances::default()).unwrap();
        assert!(cert.is_ssosp());
        let zero = check_ssosp_penalized(&model, 5.0, &v(&[0.0]), &x, &w, &Tolerances::default()).unwrap();
        assert!(zero.is_ssosp());
        assert!(zero.pattern().is_empty());
        assert_eq!(zero.min_proj_hess_eig, f64::INFINITY);
        let wrong = check_ssosp_penalized(&model, 1.0, &v(&[-2.0]), &x, &w, &Tolerances::default()).unwrap();
        assert!(!wrong.kkt_ok);
    }

    /// Brute-force subgradient condition for separable 1-d lasso pieces:
    /// 0 ∈ θ_j − x_j + λ ∂|θ_j|, checked on a grid of subgradients.
    fn subgradient_oracle(theta: &Vector, x: &Vector, lambda: f64) -> bool {
        (0..theta.len()).all(|j| {
            let g = theta[j] - x[j];
            if theta[j] != 0.0 {
                (g + lambda * theta[j].signum()).abs() < 1e-9
            } else {
                (0..=2000).any(|k| {
                    let s = -1.0 + k as f64 / 1000.0;
                    (g + lambda * s).abs() <= lambda / 1000.0 + 1e-9
                })
            }
        })
    }

    proptest! {
        #[test]
        fn penalized_check_agrees_with_subgradient_grid(
            xs in proptest::collection::vec(-2.0f64..2.0, 1..=3),
            ts in proptest::collection::vec(prop_oneof![Just(0.0), Just(0.5), Just(-0.5), -1.5f64..1.5], 3),
            lambda in 0.2f64..1.5,
            exact in proptest::bool::ANY,
        ) {
            let d = xs.len();
            let x = Vector::from_vec(xs);
            let theta = if exact {
                x.map(|v| v.signum() * (v.abs() - lambda).max(0.0))
            } else {
                Vector::from_fn(d, |j, _| ts[j])
            };
            let cert = check_ssosp_penalized(&seq_model(d), lambda, &theta, &x, &Perturbation::zero(d, 1.0).unwrap(), &Tolerances::default()).unwrap();
            let oracle = subgradient_oracle(&theta, &x, lambda);
            if exact { prop_assert!(cert.kkt_ok); }
            // the grid is coarser than tol_kkt, so only require agreement away from the edge
            let margin = (0..d).map(|j| {
                let g = theta[j] - x[j];
                if theta[j] != 0.0 { (g + lambda * theta[j].signum()).abs() } else { (g.abs() - lambda).abs() }
            }).fold(f64::INFINITY, f64::min);
            if margin > 1e-3 || exact { prop_assert_eq!(cert.kkt_ok, oracle); }
        }

        #[test]
        fn exact_quadratic_solutions_pass_and_moves_fail(
            hv in proptest::collection::vec(-1.0f64..1.0, 9),
            c in proptest::collection::vec(-3.0f64..3.0, 3),
        ) {
            // strictly convex quadratic over the nonnegative orthant with a diagonal
            // Hessian, so the solution is coordinatewise max(0, ·)
            let diag = Vector::from_fn(3, |j, _| 1.0 + hv[j].abs());
            let z = Matrix::from_diagonal(&diag.map(f64::sqrt));
            let model = Model::gaussian_linear(z.clone(), 1.0, 0.0).unwrap();
            let x = Vector::from_fn(3, |j, _| c[j] / diag[j].sqrt());
            let theta = Vector::from_fn(3, |j, _| (c[j] / diag[j]).max(0.0));
            let cs = ConstraintSet::builtin(&Builtin::Nonnegativity, 3).unwrap();
            let w = Perturbation::zero(3, 1.0).unwrap();
            let cert = check_ssosp_constrained(&model, &cs, &theta, &x, &w, &Tolerances::default()).unwrap();
            prop_assert!(cert.is_ssosp());
            // feasible descent direction: step along −∇ restricted to feasibility
            let j = (0..3).max_by(|&a, &b| theta[a].total_cmp(&theta[b])).unwrap();
            if theta[j] > 1e-2 {
                let mut moved = theta.clone();
                moved[j] += 1e-3;
                let bad = check_ssosp_constrained(&model, &cs, &moved, &x, &w, &Tolerances::default()).unwrap();
                prop_assert!(!bad.kkt_ok);
            }
        }
    }
}
