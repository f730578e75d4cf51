//! Cyclic coordinate descent for `½θᵀHθ + cᵀθ + Σ_j λ_j|θ_j|`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CdOptions {
    pub max_sweeps: usize,
    /// Largest coordinate change tolerated at convergence.
    pub step_tol: f64,
    /// Coordinatewise KKT residual tolerated at convergence.
    pub kkt_tol: f64,
}

impl Default for CdOptions {
    fn default() -> Self {
        CdOptions { max_sweeps: 10_000, step_tol: 1e-10, kkt_tol: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct CdResult {
    pub theta: Vector,
    pub sweeps: usize,
    pub converged: bool,
    pub kkt_residual: f64,
}

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Largest violation of `0 ∈ (Hθ + c)_j + λ_j ∂|θ_j|`.
pub fn l1_kkt_residual(theta: &Vector, grad: &Vector, l1: &[f64]) -> f64 {
    (0..theta.len())
        .map(|j| {
            if theta[j] != 0.0 {
                (grad[j] + l1[j] * theta[j].signum()).abs()
            } else {
                (grad[j].abs() - l1[j]).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

pub fn l1_objective(h: &Matrix, c: &Vector, l1: &[f64], theta: &Vector) -> f64 {
    0.5 * theta.dot(&(h * theta)) + c.dot(theta) + theta.iter().zip(l1).map(|(t, l)| l * t.abs()).sum::<f64>()
}

/// Coordinate descent with covariance updates. `order` fixes the sweep order
/// (identity when `None`). Sweeps alternate between the current nonzero set and
/// the full coordinate list until both are stable.
pub fn cd_quadratic_l1(
    h: &Matrix,
    c: &Vector,
    l1: &[f64],
    start: Option<&Vector>,
    order: Option<&[usize]>,
    opts: &CdOptions,
) -> Result<CdResult> {
    let d = c.len();
    if h.nrows() != d || h.ncols() != d || l1.len() != d {
        return Err(invalid("coordinate descent dimensions disagree"));
    }
    if l1.iter().any(|&l| !(l >= 0.0)) {
        return Err(invalid("l1 weights must be nonnegative"));
    }
    if let Some(j) = (0..d).find(|&j| !(h[(j, j)] > 0.0)) {
        return Err(invalid(format!("coordinate {j} has no curvature")));
    }
    let order: Vec<usize> = order.map(<[usize]>::to_vec).unwrap_or_else(|| (0..d).collect());
    let mut theta = start.cloned().unwrap_or_else(|| Vector::zeros(d));
    let mut grad = h * &theta + c;

    let update = |j: usize, theta: &mut Vector, grad: &mut Vector| -> f64 {
        let hjj = h[(j, j)];
        let new = soft(hjj * theta[j] - grad[j], l1[j]) / hjj;
        let delta = new - theta[j];
        if delta != 0.0 {
            theta[j] = new;
            grad.axpy(delta, &h.column(j), 1.0);
        }
        delta.abs()
    };

    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < opts.max_sweeps {
        let mut max_step: f64 = 0.0;
        for &j in &order {
            max_step = max_step.max(update(j, &mut theta, &mut grad));
        }
        sweeps += 1;
        if max_step <= opts.step_tol {
            // recompute the gradient from scratch so drift cannot fake a pass
            grad = h * &theta + c;
            if l1_kkt_residual(&theta, &grad, l1) <= opts.kkt_tol {
                converged = true;
                break;
            }
            continue;
        }
        // inner passes on the nonzero set
        loop {
            let active: Vec<usize> = order.iter().copied().filter(|&j| theta[j] != 0.0).collect();
            if active.is_empty() || sweeps >= opts.max_sweeps {
                break;
            }
            let mut inner_step: f64 = 0.0;
            for &j in &active {
                inner_step = inner_step.max(update(j, &mut theta, &mut grad));
            }
            sweeps += 1;
            if inner_step <= opts.step_tol {
                break;
            }
        }
    }
    grad = h * &theta + c;
    let kkt_residual = l1_kkt_residual(&theta, &grad, l1);
    Ok(CdResult { theta, sweeps, converged, kkt_residual })
}

/// Elastic net `½‖x − Zθ‖²/ν² + (λ_ridge/2)‖θ‖² + λ‖θ‖₁ + σwᵀθ`, where
/// `sigma_w` is the already-scaled vector σw.
pub fn solve_elastic_net_cd(
    z: &Matrix,
    x: &Vector,
    nu2: f64,
    lambda_ridge: f64,
    lambda_l1: f64,
    sigma_w: &Vector,
    opts: &CdOptions,
) -> Result<CdResult> {
    if !(lambda_ridge >= 0.0) || !(lambda_l1 > 0.0) {
        return Err(invalid("need lambda_ridge >= 0 and lambda_l1 > 0"));
    }
    let d = z.ncols();
    let h = z.transpose() * z / nu2 + Matrix::identity(d, d) * lambda_ridge;
    let c = -(z.transpose() * x) / nu2 + sigma_w;
    cd_quadratic_l1(&h, &c, &vec![lambda_l1; d], None, None, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_problem(seed: u64, n: usize, d: usize) -> (Matrix, Vector) {
        let mut rng = seeded(seed);
        let z = Matrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        (z, x)
    }

    #[test]
    fn identity_design_is_soft_thresholding() {
        let x = Vector::from_vec(vec![3.0, -0.5, -2.5, 1.0]);
        let r =
            solve_elastic_net_cd(&Matrix::identity(4, 4), &x, 1.0, 0.0, 1.0, &Vector::zeros(4), &CdOptions::default())
                .unwrap();
        assert!(r.converged);
        assert_eq!(r.theta, Vector::from_vec(vec![2.0, 0.0, -1.5, 0.0]));
    }

    #[test]
    fn huge_penalty_gives_zero() {
        let (z, x) = random_problem(3, 20, 10);
        let sw = Vector::from_element(10, 0.3);
        let lmax = (z.transpose() * &x - &sw).amax();
        let r = solve_elastic_net_cd(&z, &x, 1.0, 0.0, lmax * 1.01, &sw, &CdOptions::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.theta, Vector::zeros(10));
    }

    /// Independent reference: proximal gradient with a fixed step 1/‖H‖.
    fn proximal_reference(h: &Matrix, c: &Vector, lambda: f64) -> Vector {
        let step = 1.0 / h.clone().symmetric_eigenvalues().max();
        let mut t = Vector::zeros(c.len());
        for _ in 0..200_000 {
            let g = h * &t + c;
            t = (&t - g * step).map(|v| soft(v, lambda * step));
        }
        t
    }

    #[test]
    fn matches_proximal_gradient_reference() {
        let (z, x) = random_problem(9, 20, 10);
        let sw = Vector::from_fn(10, |i, _| 0.1 * i as f64 - 0.4);
        let r = solve_elastic_net_cd(&z, &x, 1.0, 0.01, 2.0, &sw, &CdOptions::default()).unwrap();
        assert!(r.converged && r.kkt_residual <= 1e-6);
        let h = z.transpose() * &z + Matrix::identity(10, 10) * 0.01;
        let c = -(z.transpose() * &x) + &sw;
        let l1 = vec![2.0; 10];
        let reference = proximal_reference(&h, &c, 2.0);
        let (a, b) = (l1_objective(&h, &c, &l1, &r.theta), l1_objective(&h, &c, &l1, &reference));
        assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
    }

    #[test]
    fn objective_never_increases_across_sweeps() {
        let (z, x) = random_problem(4, 15, 8);
        let h = z.transpose() * &z + Matrix::identity(8, 8) * 0.01;
        let c = -(z.transpose() * &x);
        let l1 = vec![0.7; 8];
        let one = CdOptions { max_sweeps: 1, ..CdOptions::default() };
        let mut t = Vector::zeros(8);
        let mut prev = l1_objective(&h, &c, &l1, &t);
        for _ in 0..50 {
            t = cd_quadratic_l1(&h, &c, &l1, Some(&t), None, &one).unwrap().theta;
            let obj = l1_objective(&h, &c, &l1, &t);
            assert!(obj <= prev + 1e-12);
            prev = obj;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn permuted_sweeps_reach_the_same_point(seed in 0u64..1000, perm in Just((0..12).collect::<Vec<usize>>()).prop_shuffle()) {
            let (z, x) = random_problem(seed, 20, 12);
            let h = z.transpose() * &z + Matrix::identity(12, 12) * 0.01;
            let c = -(z.transpose() * &x);
            let l1 = vec![1.0; 12];
            let a = cd_quadratic_l1(&h, &c, &l1, None, None, &CdOptions::default()).unwrap();
            let b = cd_quadratic_l1(&h, &c, &l1, None, Some(&perm), &CdOptions::default()).unwrap();
            prop_assert!(a.converged && b.converged);
            prop_assert!((a.theta - b.theta).amax() <= 1e-8);
        }
    }

    #[test]
    fn orthogonal_design_closed_form() {
        // Z with orthonormal columns: θ_j = soft(z_jᵀx − σw_j, λ) / (1 + λ_ridge)
        let mut rng = seeded(21);
        let g = Matrix::from_fn(12, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = g.qr().q();
        let x = Vector::from_fn(12, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
        let sw = Vector::from_fn(5, |_, _| rng.random::<f64>() - 0.5);
        let r = solve_elastic_net_cd(&q, &x, 1.0, 0.01, 2.0, &sw, &CdOptions::default()).unwrap();
        let proj = q.transpose() * &x - &sw;
        for j in 0..5 {
            let expect = soft(proj[j], 2.0) / 1.01;
            assert!((r.theta[j] - expect).abs() <= 1e-8);
        }
    }
}
