//! Unnormalized plug-in conditional density of the data given `(θ̂, ĝ)`:
//!
//! `log f(x; θ̂) − (d/2σ²)‖ĝ − ∇L(θ̂; x)‖² + log det(restricted ∇²L(θ̂; x))`
//!
//! on the set of x for which the solver reproduces θ̂ at the implied noise.

use crate::certificate::{restrict, Structure};
use crate::error::{invalid, Result};
use crate::estimation::{fit, EstimationProblem, FitResult};
use crate::model::{CoordinateLaw, Matrix, Perturbation, PointSums, Vector};

#[derive(Debug, Clone)]
pub struct ConditioningState {
    problem: EstimationProblem,
    theta_hat: Vector,
    g_hat: Vector,
    sigma: f64,
    structure: Structure,
    reg_grad: Vector,
    reg_hess: Matrix,
    law: CoordinateLaw,
    /// Set when the Hessian does not depend on x.
    fixed_log_det: Option<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDensityValue {
    /// `−∞` when the indicator fails.
    pub log_value: f64,
    pub log_f: f64,
    pub gauss_exponent: f64,
    pub log_det: f64,
    pub indicator: bool,
}

impl LogDensityValue {
    fn new(log_f: f64, gauss_exponent: f64, log_det: Option<f64>) -> Self {
        match log_det {
            Some(ld) => LogDensityValue {
                log_value: log_f + gauss_exponent + ld,
                log_f,
                gauss_exponent,
                log_det: ld,
                indicator: true,
            },
            None => LogDensityValue {
                log_value: f64::NEG_INFINITY,
                log_f,
                gauss_exponent,
                log_det: f64::NAN,
                indicator: false,
            },
        }
    }
}

/// Sums over observations needed to evaluate the density at one x. Kept so a
/// proposal touching s coordinates costs O(s) instead of O(n).
#[derive(Debug, Clone)]
pub struct DensityCache {
    sums: PointSums,
}

/// `log det` through Cholesky; `None` when the matrix is not positive definite.
pub fn chol_log_det(m: &Matrix) -> Option<f64> {
    if m.nrows() == 0 {
        return Some(0.0);
    }
    let c = m.clone().cholesky()?;
    Some(2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

impl ConditioningState {
    /// Conditioning state for an SSOSP fit of `problem` at noise scale `sigma`.
    pub fn from_fit(problem: &EstimationProblem, fit: &FitResult, sigma: f64) -> Result<Self> {
        if !fit.is_ssosp() {
            return Err(invalid("conditioning requires an SSOSP fit"));
        }
        if !(sigma > 0.0) {
            return Err(invalid("sigma must be positive"));
        }
        let theta_hat = fit.theta().clone();
        let (_, reg_grad, reg_hess) = problem.model.regularizer(&theta_hat);
        let law = problem.model.coordinate_law(&theta_hat)?;
        let mut state = ConditioningState {
            problem: problem.clone(),
            theta_hat,
            g_hat: fit.g_hat().clone(),
            sigma,
            structure: fit.certificate.structure.clone(),
            reg_grad,
            reg_hess,
            law,
            fixed_log_det: None,
        };
        if let Some(g) = problem.model.as_gaussian() {
            state.fixed_log_det = Some(chol_log_det(&state.restricted(&g.hessian())));
        }
        Ok(state)
    }

    pub fn problem(&self) -> &EstimationProblem {
        &self.problem
    }
    pub fn theta_hat(&self) -> &Vector {
        &self.theta_hat
    }
    pub fn g_hat(&self) -> &Vector {
        &self.g_hat
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn structure(&self) -> &Structure {
        &self.structure
    }
    pub fn coordinate_law(&self) -> &CoordinateLaw {
        &self.law
    }
    /// `∇R(θ̂)`.
    pub fn reg_grad(&self) -> &Vector {
        &self.reg_grad
    }
    pub fn dim(&self) -> usize {
        self.theta_hat.len()
    }
    pub fn n_obs(&self) -> usize {
        self.problem.model.n_obs()
    }

    /// `UᵀHU` (constrained) or `H_S` (penalized).
    pub fn restricted(&self, h: &Matrix) -> Matrix {
        match &self.structure {
            Structure::Constrained { basis, .. } => basis.u.transpose() * h * &basis.u,
            Structure::Penalized { support, .. } => restrict(h, support),
        }
    }

    pub fn cache(&self, x: &Vector) -> DensityCache {
        let with_h = self.fixed_log_det.is_none();
        DensityCache { sums: self.problem.model.point_sums(&self.theta_hat, x, with_h) }
    }

    /// Cache for `x_new`, which differs from `x_old` only at `idx`.
    pub fn updated_cache(&self, cache: &DensityCache, x_old: &Vector, x_new: &Vector, idx: &[usize]) -> DensityCache {
        let mut sums = cache.sums.clone();
        for &i in idx {
            self.problem.model.add_point_terms(&self.theta_hat, i, x_old[i], -1.0, &mut sums);
            self.problem.model.add_point_terms(&self.theta_hat, i, x_new[i], 1.0, &mut sums);
        }
        DensityCache { sums }
    }

    /// `∇_θ[−log f(x; θ̂) + R(θ̂)]` from a cache.
    pub fn data_gradient(&self, cache: &DensityCache) -> Vector {
        &cache.sums.grad + &self.reg_grad
    }

    /// Density parts without the membership refit.
    pub fn value_from_cache(&self, cache: &DensityCache) -> LogDensityValue {
        let resid = &self.g_hat - self.data_gradient(cache);
        let d = self.dim() as f64;
        let exponent = -(d / (2.0 * self.sigma * self.sigma)) * resid.norm_squared();
        let log_det = match self.fixed_log_det {
            Some(ld) => ld,
            None => {
                let h = cache.sums.hess.as_ref().expect("hessian tracked") + &self.reg_hess;
                chol_log_det(&self.restricted(&h))
            }
        };
        LogDensityValue::new(-cache.sums.nll, exponent, log_det)
    }

    pub fn log_unnorm_density(&self, x: &Vector, check_membership: bool) -> LogDensityValue {
        if self.problem.model.check_data(x).is_err() {
            return LogDensityValue::new(f64::NAN, f64::NAN, None);
        }
        let v = self.value_from_cache(&self.cache(x));
        if v.indicator && check_membership && !self.membership_check(x) {
            return LogDensityValue { log_value: f64::NEG_INFINITY, indicator: false, ..v };
        }
        v
    }

    /// Refit at `w* = (ĝ − ∇L(θ̂; x))/σ` and ask whether the solver lands back
    /// on θ̂ with the same active set or support. Always true for Gaussian
    /// models, where the fit is the unique strictly convex minimizer.
    pub fn membership_check(&self, x: &Vector) -> bool {
        if self.fixed_log_det.is_some() {
            return matches!(self.fixed_log_det, Some(Some(_)));
        }
        let cache = self.cache(x);
        if !self.value_from_cache(&cache).indicator {
            return false;
        }
        self.refit_matches(x, &cache)
    }

    fn refit_matches(&self, x: &Vector, cache: &DensityCache) -> bool {
        let w_star = (&self.g_hat - self.data_gradient(cache)) / self.sigma;
        let Ok(w) = Perturbation::new(w_star, self.sigma) else { return false };
        let Ok(refit) = fit(&self.problem, x, &w) else { return false };
        let tol = self.problem.tolerances();
        refit.is_ssosp()
            && (refit.theta() - &self.theta_hat).norm() <= tol.member(self.theta_hat.norm())
            && refit.certificate.pattern() == self.pattern()
    }

    /// Same check with a cache the caller already holds.
    pub fn membership_check_cached(&self, x: &Vector, cache: &DensityCache) -> bool {
        if self.fixed_log_det.is_some() {
            return true;
        }
        self.refit_matches(x, cache)
    }

    pub fn pattern(&self) -> &[usize] {
        match &self.structure {
            Structure::Constrained { active, .. } => &active.indices,
            Structure::Penalized { support, .. } => support,
        }
    }

    /// `log p(x_new) − log p(x_old)`. The Gaussian path only evaluates the
    /// quadratic form since the determinant and indicator are constant.
    pub fn log_density_ratio(&self, x_new: &Vector, x_old: &Vector, check_membership: bool) -> f64 {
        if let Some(g) = self.problem.model.as_gaussian() {
            if x_new.len() != x_old.len() || x_new.len() != g.z().nrows() {
                return f64::NEG_INFINITY;
            }
            return self.gaussian_log_kernel(x_new) - self.gaussian_log_kernel(x_old);
        }
        let new = self.log_unnorm_density(x_new, check_membership);
        if !new.indicator {
            return f64::NEG_INFINITY;
        }
        let old = self.log_unnorm_density(x_old, false);
        new.log_value - old.log_value
    }

    fn gaussian_log_kernel(&self, x: &Vector) -> f64 {
        let g = self.problem.model.as_gaussian().expect("gaussian state");
        let r = x - g.z() * &self.theta_hat;
        let grad = -(g.z().transpose() * &r) / g.nu2() + &self.reg_grad;
        let d = self.dim() as f64;
        -r.norm_squared() / (2.0 * g.nu2())
            - (d / (2.0 * self.sigma * self.sigma)) * (&self.g_hat - grad).norm_squared()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{Builtin, ConstraintSet};
    use crate::estimation::{mixture_problem, Mode, SolverKind, SolverOptions};
    use crate::model::{draw_perturbation, Model};
    use crate::rng::seeded;

    fn isotonic_state(seed: u64, n: usize, sigma: f64) -> (ConditioningState, Vector) {
        let model = Model::gaussian_linear(Matrix::identity(n, n), 1.0, 0.0).unwrap();
        let cs = ConstraintSet::builtin(&Builtin::Monotone, n).unwrap();
        let p =
            EstimationProblem::new(model, Mode::Constrained(cs), SolverKind::Pava, SolverOptions::default()).unwrap();
        let mut rng = seeded(seed);
        let theta0 = Vector::from_fn(n, |i, _| 0.1 * (i / 3) as f64);
        let x = p.model.simulate(&theta0, &mut rng).unwrap();
        let w = draw_perturbation(n, sigma, &mut rng).unwrap();
        let f = fit(&p, &x, &w).unwrap();
        (ConditioningState::from_fit(&p, &f, sigma).unwrap(), x)
    }

    fn mixture_state(seed: u64) -> (ConditioningState, Vector) {
        let p = mixture_problem(30, 0.098, SolverOptions::default()).unwrap();
        let theta0 = Vector::from_vec(vec![0.5, 0.4, 0.1, -0.4, 0.1]);
        for s in seed.. {
            let mut rng = seeded(s);
            let x = p.model.simulate(&theta0, &mut rng).unwrap();
            let w = draw_perturbation(5, 8.0, &mut rng).unwrap();
            let f = fit(&p, &x, &w).unwrap();
            if f.is_ssosp() {
                return (ConditioningState::from_fit(&p, &f, 8.0).unwrap(), x);
            }
        }
        unreachable!()
    }

    #[test]
    fn exponent_vanishes_when_gradients_match() {
        let (state, _) = isotonic_state(1, 6, 2.0);
        // x with ∇L(θ̂; x) = ĝ: for Z = I, ν = 1, R = 0 that is x = θ̂ − ĝ
        let x = state.theta_hat() - state.g_hat();
        let v = state.log_unnorm_density(&x, true);
        assert!(v.gauss_exponent.abs() < 1e-24);
        assert!(v.indicator);
    }

    #[test]
    fn parts_sum_to_value_and_membership_holds_at_data() {
        let (state, x) = mixture_state(3);
        let v = state.log_unnorm_density(&x, true);
        assert!(v.indicator);
        assert_eq!(v.log_value, v.log_f + v.gauss_exponent + v.log_det);
        assert_eq!(state.log_density_ratio(&x, &x, true), 0.0);
    }

    #[test]
    fn far_outlying_data_gives_a_stable_answer() {
        let (state, x) = mixture_state(5);
        let far = x.map(|v| 3.0 * v + 2.0);
        let a = state.membership_check(&far);
        let b = state.membership_check(&far);
        assert_eq!(a, b);
        let v = state.log_unnorm_density(&far, true);
        assert!(!v.indicator || v.log_value.is_finite());
    }

    #[test]
    fn checked_indicator_implies_unchecked() {
        let (state, x) = mixture_state(11);
        let mut rng = seeded(4);
        for _ in 0..30 {
            let mut y = x.clone();
            let i = rand::Rng::random_range(&mut rng, 0..y.len());
            y[i] = state.coordinate_law().sample(i, &mut rng);
            let checked = state.log_unnorm_density(&y, true);
            let unchecked = state.log_unnorm_density(&y, false);
            assert!(!checked.indicator || unchecked.indicator);
        }
    }

    #[test]
    fn incremental_cache_matches_full_evaluation() {
        let (state, x) = mixture_state(2);
        let cache = state.cache(&x);
        let mut y = x.clone();
        y[3] += 0.05;
        y[7] -= 0.2;
        let upd = state.updated_cache(&cache, &x, &y, &[3, 7]);
        let a = state.value_from_cache(&upd);
        let b = state.value_from_cache(&state.cache(&y));
        assert!((a.log_value - b.log_value).abs() < 1e-8 * (1.0 + b.log_value.abs()));
    }

    #[test]
    fn ratio_is_shift_invariant() {
        let (state, x) = mixture_state(9);
        let mut y = x.clone();
        y[0] = 0.3;
        let a = state.log_unnorm_density(&y, false).log_value + 5.0;
        let b = state.log_unnorm_density(&x, false).log_value + 5.0;
        let direct = state.log_density_ratio(&y, &x, false);
        assert!(((a - b) - direct).abs() < 1e-10);
    }

    #[test]
    fn one_dimensional_slice_integrates() {
        // numerically integrate exp(log density) along one coordinate of a tiny sample
        let p = mixture_problem(6, 0.098, SolverOptions::default()).unwrap();
        let x = Vector::from_vec(vec![0.42, 0.35, 0.5, -0.38, -0.45, -0.3]);
        let w = Perturbation::zero(5, 8.0).unwrap();
        let f = fit(&p, &x, &w).unwrap();
        let state = ConditioningState::from_fit(&p, &f, 8.0).unwrap();
        let base = state.log_unnorm_density(&x, false).log_value;
        let mut total = 0.0;
        let h = 1e-3;
        let mut y = x.clone();
        for k in -20_000..=20_000 {
            y[0] = k as f64 * h;
            let v = state.log_unnorm_density(&y, false);
            if v.indicator {
                total += (v.log_value - base).exp() * h;
            }
        }
        assert!(total.is_finite() && total > 0.0, "{total}");
    }

    #[test]
    fn gaussian_fast_path_agrees_with_general_path() {
        let (state, x) = isotonic_state(6, 8, 3.0);
        let mut rng = seeded(1);
        for _ in 0..20 {
            let y = state.problem().model.simulate(state.theta_hat(), &mut rng).unwrap();
            let general = state.log_unnorm_density(&y, true).log_value - state.log_unnorm_density(&x, true).log_value;
            let fast = state.log_density_ratio(&y, &x, true);
            assert!((general - fast).abs() < 1e-9 * (1.0 + general.abs()));
        }
    }
}
