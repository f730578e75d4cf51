//! Box-constrained fit of the two-component mixture: k-means seeded EM for a
//! starting point, then projected Newton steps on the perturbed loss.

use crate::certificate::min_eigenvalue;
use crate::constraints::ConstraintSet;
use crate::error::{invalid, AcssError, Result};
use crate::model::{LossEvaluation, Matrix, MixtureTerms, Model, Perturbation, Vector};

use super::SolverOptions;

/// Mixing weights are kept inside `[PI_CLIP, 1 − PI_CLIP]`.
pub const PI_CLIP: f64 = 1e-6;
/// Standard deviations never go below this even without a constraint.
pub const SD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds {
    pub lo: Vector,
    pub hi: Vector,
}

impl BoxBounds {
    /// The constraint box intersected with the solver's own safety clip.
    pub fn for_mixture(cs: &ConstraintSet) -> Result<Self> {
        if cs.dim() != 5 {
            return Err(invalid("mixture constraints must have dimension 5"));
        }
        let (lo, hi) = cs
            .as_box()
            .ok_or_else(|| AcssError::Unsupported("mixture solver needs axis-aligned bound constraints".into()))?;
        let mut lo = Vector::from_vec(lo);
        let mut hi = Vector::from_vec(hi);
        lo[0] = lo[0].max(PI_CLIP);
        hi[0] = hi[0].min(1.0 - PI_CLIP);
        for j in [2, 4] {
            lo[j] = lo[j].max(SD_FLOOR);
        }
        if (0..5).any(|j| lo[j] > hi[j]) {
            return Err(AcssError::InfeasibleProblem);
        }
        Ok(BoxBounds { lo, hi })
    }

    pub fn project(&self, t: &mut Vector) {
        for j in 0..t.len() {
            t[j] = t[j].clamp(self.lo[j], self.hi[j]);
        }
    }
}

/// Mean and (population) standard deviation of `v[a..b]` from prefix sums.
fn block_stats(s1: &[f64], s2: &[f64], a: usize, b: usize) -> (f64, f64) {
    let m = (b - a) as f64;
    let mean = (s1[b] - s1[a]) / m;
    let var = ((s2[b] - s2[a]) / m - mean * mean).max(0.0);
    (mean, var.sqrt())
}

/// Deterministic starting point: 1-d two-means from the quartiles, moment
/// estimates per cluster (upper cluster first), then EM iterations.
pub fn em_init(x: &Vector, bounds: &BoxBounds, em_iters: usize) -> Vector {
    let n = x.len();
    let mut sorted: Vec<f64> = x.iter().copied().collect();
    sorted.sort_unstable_by(f64::total_cmp);
    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for i in 0..n {
        s1[i + 1] = s1[i] + sorted[i];
        s2[i + 1] = s2[i] + sorted[i] * sorted[i];
    }
    let q = |p: f64| sorted[((n - 1) as f64 * p).round() as usize];
    let (lo_c, mut hi_c) = (q(0.25), q(0.75));
    if hi_c <= lo_c {
        hi_c = lo_c + 1e-3 * (1.0 + lo_c.abs());
    }
    let mut split = 0.5 * (lo_c + hi_c);
    // points at or above the split form the upper cluster
    let mut k = sorted.partition_point(|&v| v < split);
    for _ in 0..100 {
        if k == 0 || k == n {
            break;
        }
        let next = 0.5 * (block_stats(&s1, &s2, 0, k).0 + block_stats(&s1, &s2, k, n).0);
        if next == split {
            break;
        }
        split = next;
        k = sorted.partition_point(|&v| v < split);
    }
    let overall = block_stats(&s1, &s2, 0, n);
    let (m1, sd1) = if k == n { overall } else { block_stats(&s1, &s2, k, n) };
    let (m2, sd2) = if k == 0 { overall } else { block_stats(&s1, &s2, 0, k) };
    let mut t = Vector::from_vec(vec![(n - k) as f64 / n as f64, m1, sd1, m2, sd2]);
    bounds.project(&mut t);

    for _ in 0..em_iters {
        let terms = MixtureTerms::new(t.as_slice());
        let mut acc = [0.0f64; 6]; // Σr1, Σr1x, Σr1x², Σr2, Σr2x, Σr2x²
        for &v in x.iter() {
            let (r1, r2) = terms.weights(v);
            acc[0] += r1;
            acc[1] += r1 * v;
            acc[2] += r1 * v * v;
            acc[3] += r2;
            acc[4] += r2 * v;
            acc[5] += r2 * v * v;
        }
        if acc[0] < 1e-8 || acc[3] < 1e-8 {
            break;
        }
        let nm1 = acc[1] / acc[0];
        let nm2 = acc[4] / acc[3];
        let nv1 = (acc[2] / acc[0] - nm1 * nm1).max(0.0);
        let nv2 = (acc[5] / acc[3] - nm2 * nm2).max(0.0);
        let mut next = Vector::from_vec(vec![acc[0] / n as f64, nm1, nv1.sqrt(), nm2, nv2.sqrt()]);
        bounds.project(&mut next);
        let step = (&next - &t).amax();
        t = next;
        if step <= 1e-12 * (1.0 + t.amax()) {
            break;
        }
    }
    t
}

pub(crate) struct NewtonOutcome {
    pub theta: Vector,
    pub eval: LossEvaluation,
    pub iterations: usize,
    pub converged: bool,
}

/// Projected Newton iterations on the box: Newton steps on the coordinates
/// that are not held at a bound by the gradient, scaled gradient steps on the
/// rest, Armijo backtracking along the projection arc.
pub(crate) fn projected_newton(
    model: &Model,
    bounds: &BoxBounds,
    x: &Vector,
    w: &Perturbation,
    init: Vector,
    opts: &SolverOptions,
) -> Result<NewtonOutcome> {
    let tol = &opts.tolerances;
    let mut theta = init;
    bounds.project(&mut theta);
    let mut ev = model.loss(&theta, x, w)?;
    let pg_norm = |t: &Vector, g: &Vector| {
        (0..t.len()).map(|j| (t[j] - (t[j] - g[j]).clamp(bounds.lo[j], bounds.hi[j])).powi(2)).sum::<f64>().sqrt()
    };
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let g = ev.gradient.clone();
        let pgn = pg_norm(&theta, &g);
        if pgn <= 1e-3 * tol.kkt(g.norm()) {
            break;
        }
        iterations += 1;
        let eps_b = pgn.min(1e-6);
        let held = |j: usize| {
            (theta[j] <= bounds.lo[j] + eps_b && g[j] > 0.0) || (theta[j] >= bounds.hi[j] - eps_b && g[j] < 0.0)
        };
        let free: Vec<usize> = (0..5).filter(|&j| !held(j)).collect();
        let mut dir = Vector::zeros(5);
        for j in (0..5).filter(|&j| held(j)) {
            dir[j] = -g[j] / ev.hessian[(j, j)].abs().max(1e-8);
        }
        if !free.is_empty() {
            let k = free.len();
            let hff = Matrix::from_fn(k, k, |a, b| ev.hessian[(free[a], free[b])]);
            let gf = Vector::from_fn(k, |a, _| g[free[a]]);
            let min_eig = min_eigenvalue(&hff);
            let floor = 1e-8 * (1.0 + hff.diagonal().amax());
            let shift = if min_eig >= floor { 0.0 } else { floor - min_eig };
            let reg = &hff + Matrix::identity(k, k) * shift;
            let step =
                reg.cholesky().map(|c| -c.solve(&gf)).unwrap_or_else(|| -gf.clone() / (1.0 + hff.diagonal().amax()));
            for (a, &j) in free.iter().enumerate() {
                dir[j] = step[a];
            }
        }

        let f0 = ev.value;
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut cand = &theta + &dir * alpha;
            bounds.project(&mut cand);
            let decrease = g.dot(&(&cand - &theta));
            if let Ok(fv) = model.loss_value(&cand, x, w) {
                if fv <= f0 + 1e-4 * decrease + 1e-14 * f0.abs() {
                    accepted = Some(cand);
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some(cand) = accepted else { break };
        let cev = model.loss(&cand, x, w)?;
        let moved = (&cand - &theta).norm();
        theta = cand;
        ev = cev;
        if moved <= 1e-15 * (1.0 + theta.norm()) {
            break;
        }
    }
    let converged = pg_norm(&theta, &ev.gradient) <= tol.kkt(ev.gradient.norm());
    Ok(NewtonOutcome { theta, eval: ev, iterations, converged })
}
