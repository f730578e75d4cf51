//! Lawson–Hanson nonnegative least squares, `min ‖Cx − d‖ s.t. x ≥ 0`.

use crate::model::{checked_svd, Matrix, Vector};

fn lstsq(c: &Matrix, d: &Vector) -> Vector {
    let svd = checked_svd(c);
    let eps = 1e-12 * svd.singular_values.max();
    svd.solve(d, eps).unwrap_or_else(|_| Vector::zeros(c.ncols()))
}

fn columns(c: &Matrix, idx: &[usize]) -> Matrix {
    Matrix::from_fn(c.nrows(), idx.len(), |i, j| c[(i, idx[j])])
}

/// Returns the minimizer and the residual norm.
pub fn nnls(c: &Matrix, d: &Vector) -> (Vector, f64) {
    let k = c.ncols();
    if k == 0 {
        return (Vector::zeros(0), d.norm());
    }
    // When the unconstrained least-squares solution is already nonnegative it
    // is the answer; this is the common case for well-posed KKT systems.
    let ls = lstsq(c, d);
    if ls.iter().all(|&v| v >= 0.0) {
        let r = (c * &ls - d).norm();
        return (ls, r);
    }

    let tol = 10.0 * f64::EPSILON * c.abs().row_sum().max() * (c.nrows().max(k) as f64);
    let mut x = Vector::zeros(k);
    let mut passive = vec![false; k];
    // indices whose entry produced a zero step; skipped until the iterate moves
    let mut blocked = vec![false; k];
    let max_outer = 10 * k + 50;
    for _ in 0..max_outer {
        let w = c.transpose() * (d - c * &x);
        let cand = (0..k).filter(|&j| !passive[j] && !blocked[j]).max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(j) = cand else { break };
        if w[j] <= tol {
            break;
        }
        passive[j] = true;
        let before = x.clone();
        for _ in 0..(3 * k + 10) {
            let idx: Vec<usize> = (0..k).filter(|&j| passive[j]).collect();
            let sp = lstsq(&columns(c, &idx), d);
            if sp.iter().all(|&v| v > tol) {
                x.fill(0.0);
                for (p, &j) in idx.iter().enumerate() {
                    x[j] = sp[p];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (p, &j) in idx.iter().enumerate() {
                if sp[p] <= tol {
                    let denom = x[j] - sp[p];
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (p, &j) in idx.iter().enumerate() {
                x[j] += alpha * (sp[p] - x[j]);
                if x[j] <= tol {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            if idx.iter().all(|&j| !passive[j]) {
                break;
            }
        }
        if x == before {
            blocked[j] = true;
            passive[j] = false;
        } else {
            blocked.fill(false);
        }
    }
    let r = (c * &x - d).norm();
    (x, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(c: &Matrix, d: &Vector) -> f64 {
        // best residual over every support pattern
        let k = c.ncols();
        let mut best = d.norm();
        for mask in 1u32..(1 << k) {
            let idx: Vec<usize> = (0..k).filter(|j| mask >> j & 1 == 1).collect();
            let sub = columns(c, &idx);
            let s = lstsq(&sub, d);
            if s.iter().all(|&v| v >= -1e-12) {
                best = best.min((sub * s - d).norm());
            }
        }
        best
    }

    #[test]
    fn negative_direction_is_clamped() {
        let c = Matrix::identity(2, 2);
        let d = Vector::from_vec(vec![1.0, -2.0]);
        let (x, r) = nnls(&c, &d);
        assert_eq!(x, Vector::from_vec(vec![1.0, 0.0]));
        assert!((r - 2.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn matches_exhaustive_support_search(
            vals in proptest::collection::vec(-2.0f64..2.0, 12),
            rhs in proptest::collection::vec(-2.0f64..2.0, 4),
        ) {
            let c = Matrix::from_row_slice(4, 3, &vals);
            let d = Vector::from_vec(rhs);
            let (x, r) = nnls(&c, &d);
            prop_assert!(x.iter().all(|&v| v >= 0.0));
            prop_assert!((r - brute_force(&c, &d)).abs() < 1e-9);
        }
    }
}
