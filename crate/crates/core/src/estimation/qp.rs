//! Dense convex QP `min ½θᵀHθ + cᵀθ s.t. Aθ ≤ b`.
//!
//! The problem is first rewritten as a least-distance program in the Cholesky
//! coordinates of H and solved through NNLS, which either certifies
//! infeasibility or returns the optimum. A primal active-set pass then
//! sharpens the point and its multipliers on the identified working set.

use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::error::{invalid, AcssError, Result};
use crate::model::{checked_svd, Matrix, Vector};
use crate::nnls::nnls;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QpOptions {
    pub max_iter: usize,
    /// Residual level for KKT and complementary slackness.
    pub tol: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions { max_iter: 500, tol: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub theta: Vector,
    /// One entry per constraint row.
    pub multipliers: Vector,
    pub iterations: usize,
    pub converged: bool,
}

/// Solve the equality-constrained subproblem on the working set `w`.
fn solve_eqp(h: &Matrix, c: &Vector, a: &Matrix, b: &Vector, w: &[usize]) -> (Vector, Vector) {
    let d = h.nrows();
    let k = w.len();
    let mut kkt = Matrix::zeros(d + k, d + k);
    kkt.view_mut((0, 0), (d, d)).copy_from(h);
    let mut rhs = Vector::zeros(d + k);
    rhs.rows_mut(0, d).copy_from(&(-c));
    for (r, &i) in w.iter().enumerate() {
        for j in 0..d {
            kkt[(d + r, j)] = a[(i, j)];
            kkt[(j, d + r)] = a[(i, j)];
        }
        rhs[d + r] = b[i];
    }
    let sol = match kkt.clone().lu().solve(&rhs) {
        Some(s) if s.iter().all(|v| v.is_finite()) => s,
        // dependent working rows: fall back to the minimum-norm solution
        _ => {
            let svd = checked_svd(&kkt);
            let eps = 1e-12 * svd.singular_values.max();
            svd.solve(&rhs, eps).unwrap_or_else(|_| Vector::zeros(d + k))
        }
    };
    (sol.rows(0, d).into_owned(), sol.rows(d, k).into_owned())
}

pub fn solve_activeset_qp(h: &Matrix, c: &Vector, cs: &ConstraintSet, opts: &QpOptions) -> Result<QpSolution> {
    let d = c.len();
    if h.nrows() != d || h.ncols() != d || cs.dim() != d {
        return Err(invalid("QP dimensions disagree"));
    }
    let chol = h.clone().cholesky().ok_or_else(|| invalid("QP Hessian is not positive definite"))?;
    let (a, b) = (cs.a(), cs.b());
    let r = cs.n_rows();
    let theta_u = chol.solve(&(-c));
    let scale = 1.0 + b.amax() + theta_u.amax();
    if r == 0 || cs.slack(&theta_u).iter().all(|&s| s >= 0.0) {
        return Ok(QpSolution { theta: theta_u, multipliers: Vector::zeros(r), iterations: 0, converged: true });
    }

    // u = Lᵀ(θ − θ_u) turns the objective into ½‖u‖² and the constraints into
    // G u ≥ h with G = −A L⁻ᵀ, h = A θ_u − b.
    let l = chol.l();
    let lt = l.transpose();
    let linv = l
        .solve_lower_triangular(&Matrix::identity(d, d))
        .ok_or_else(|| AcssError::Internal("triangular solve failed".into()))?;
    let g = -(a * linv.transpose());
    let hvec = a * &theta_u - b;
    // least-distance program via NNLS on [Gᵀ; hᵀ] y ≈ e_{d+1}
    let mut e = Matrix::zeros(d + 1, r);
    e.view_mut((0, 0), (d, r)).copy_from(&g.transpose());
    for i in 0..r {
        e[(d, i)] = hvec[i];
    }
    let mut f = Vector::zeros(d + 1);
    f[d] = 1.0;
    let (y, _) = nnls(&e, &f);
    let resid = &e * &y - &f;
    if resid[d].abs() <= 1e-12 {
        return Err(AcssError::InfeasibleProblem);
    }
    let u = -resid.rows(0, d) / resid[d];
    let mut theta = &theta_u
        + lt.solve_upper_triangular(&u).ok_or_else(|| AcssError::Internal("triangular solve failed".into()))?;
    if cs.slack(&theta).iter().any(|&s| s < -1e-7 * scale) {
        return Err(AcssError::InfeasibleProblem);
    }

    let act_tol = 1e-10 * scale;
    let mut work: Vec<usize> = (0..r).filter(|&i| cs.slack(&theta)[i] <= act_tol).collect();
    let mut iterations = 0;
    let mut converged = false;
    let mut lam_w = Vector::zeros(0);
    while iterations < opts.max_iter {
        iterations += 1;
        let (cand, lam) = solve_eqp(h, c, a, b, &work);
        let step = &cand - &theta;
        // largest feasible fraction of the step
        let mut alpha = 1.0;
        let mut blocking = None;
        let slack = cs.slack(&theta);
        for i in 0..r {
            if work.contains(&i) {
                continue;
            }
            let ad = a.row(i).dot(&step.transpose());
            if ad > 0.0 {
                let t = slack[i].max(0.0) / ad;
                if t < alpha {
                    alpha = t;
                    blocking = Some(i);
                }
            }
        }
        if let Some(i) = blocking {
            theta += step * alpha;
            work.push(i);
            work.sort_unstable();
            continue;
        }
        theta = cand;
        lam_w = lam;
        match (0..work.len()).min_by(|&p, &q| lam_w[p].total_cmp(&lam_w[q])) {
            Some(p) if lam_w[p] < -opts.tol => {
                work.remove(p);
            }
            _ => {
                converged = true;
                break;
            }
        }
    }
    let mut multipliers = Vector::zeros(r);
    if lam_w.len() == work.len() {
        for (p, &i) in work.iter().enumerate() {
            multipliers[i] = lam_w[p].max(0.0);
        }
    }
    Ok(QpSolution { theta, multipliers, iterations, converged })
}
