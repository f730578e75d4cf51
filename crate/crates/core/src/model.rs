//! Parametric families and the perturbed loss
//! `L(θ; x, w) = −log f(x; θ) + R(θ) + σ wᵀθ`.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, Dyn, SVD};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, AcssError, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

fn svd_error(m: &Matrix, svd: &SVD<f64, Dyn, Dyn>) -> f64 {
    match (&svd.u, &svd.v_t) {
        (Some(u), Some(vt)) => (u * Matrix::from_diagonal(&svd.singular_values) * vt - m).amax(),
        _ => f64::INFINITY,
    }
}

/// One-sided Jacobi SVD of a matrix with at least as many rows as columns.
fn jacobi_svd_tall(m: &Matrix) -> (Matrix, Vector, Matrix) {
    let n = m.ncols();
    let mut a = m.clone();
    let mut v = Matrix::identity(n, n);
    for _ in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut a, &mut v] {
                    for i in 0..mat.nrows() {
                        let (x, y) = (mat[(i, p)], mat[(i, q)]);
                        mat[(i, p)] = c * x - s * y;
                        mat[(i, q)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let sv = Vector::from_fn(n, |k, _| norms[order[k]]);
    let u = Matrix::from_fn(m.nrows(), n, |i, k| {
        let j = order[k];
        if norms[j] > 0.0 {
            a[(i, j)] / norms[j]
        } else {
            0.0
        }
    });
    let vt = Matrix::from_fn(n, n, |k, i| v[(i, order[k])]);
    (u, sv, vt)
}

/// Thin SVD with both factors, checked against the input. nalgebra's
/// bidiagonal iteration occasionally returns a bad factorization for sparse
/// structured matrices; those fall back to one-sided Jacobi.
pub fn checked_svd(m: &Matrix) -> SVD<f64, Dyn, Dyn> {
    let tol = 1e-10 * (1.0 + m.amax());
    let direct = m.clone().svd(true, true);
    if svd_error(m, &direct) <= tol {
        return direct;
    }
    let (u, singular_values, v_t) = if m.nrows() >= m.ncols() {
        jacobi_svd_tall(m)
    } else {
        let (u, s, vt) = jacobi_svd_tall(&m.transpose());
        (vt.transpose(), s, u.transpose())
    };
    SVD { u: Some(u), v_t: Some(v_t), singular_values }
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Distance to the edge of the mixture parameter space treated as outside it.
pub const DOMAIN_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct LossEvaluation {
    pub value: f64,
    pub gradient: Vector,
    pub hessian: Matrix,
}

/// Noise vector `W` together with the scale `σ` it enters the loss with.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub values: Vector,
    pub sigma: f64,
}

impl Perturbation {
    pub fn new(values: Vector, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(invalid(format!("sigma must be positive, got {sigma}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("perturbation has non-finite entries"));
        }
        Ok(Perturbation { values, sigma })
    }

    pub fn zero(d: usize, sigma: f64) -> Result<Self> {
        Self::new(Vector::zeros(d), sigma)
    }

    /// The contribution `σw` to the gradient.
    pub fn scaled(&self) -> Vector {
        &self.values * self.sigma
    }
}

/// Draw `W ~ N(0, I_d / d)`.
pub fn draw_perturbation<R: Rng + ?Sized>(d: usize, sigma: f64, rng: &mut R) -> Result<Perturbation> {
    if d == 0 {
        return Err(invalid("perturbation dimension must be at least 1"));
    }
    let sd = (1.0 / d as f64).sqrt();
    let values = Vector::from_fn(d, |_, _| sd * rng.sample::<f64, _>(StandardNormal));
    Perturbation::new(values, sigma)
}

/// `X ~ N(Zθ, ν² I_n)` with ridge regularizer `R(θ) = (λ_ridge/2)‖θ‖²`.
#[derive(Debug, Clone)]
pub struct GaussianLinear {
    z: Matrix,
    nu2: f64,
    ridge: f64,
    gram: Matrix,
}

impl GaussianLinear {
    pub fn new(z: Matrix, nu2: f64, ridge: f64) -> Result<Self> {
        if z.ncols() == 0 || z.nrows() == 0 {
            return Err(invalid("design matrix must be non-empty"));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(invalid("design matrix has non-finite entries"));
        }
        if !(nu2 > 0.0 && nu2.is_finite()) {
            return Err(invalid(format!("nu2 must be positive, got {nu2}")));
        }
        if !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(invalid(format!("ridge must be nonnegative, got {ridge}")));
        }
        let gram = z.transpose() * &z;
        let model = GaussianLinear { z, nu2, ridge, gram };
        if ridge > 0.0 && model.hessian().cholesky().is_none() {
            return Err(invalid("regularized Hessian is not positive definite"));
        }
        Ok(model)
    }

    /// Identity design: the sequence model used for isotonic problems.
    pub fn identity(n: usize, nu2: f64, ridge: f64) -> Result<Self> {
        Self::new(Matrix::identity(n, n), nu2, ridge)
    }

    pub fn z(&self) -> &Matrix {
        &self.z
    }
    pub fn nu2(&self) -> f64 {
        self.nu2
    }
    pub fn ridge(&self) -> f64 {
        self.ridge
    }
    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    /// `(1/ν²) ZᵀZ + λ_ridge I`, which does not depend on x.
    pub fn hessian(&self) -> Matrix {
        let d = self.z.ncols();
        &self.gram / self.nu2 + Matrix::identity(d, d) * self.ridge
    }

    pub fn is_identity_design(&self) -> bool {
        self.z.is_square() && self.z == Matrix::identity(self.z.nrows(), self.z.ncols())
    }
}

/// Two-component univariate Gaussian mixture, parameters `(π1, μ1, σ1, μ2, σ2)`
/// with standard deviations (not variances). `n` is the sample size drawn by
/// `simulate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mixture2 {
    pub n: usize,
}

#[derive(Debug, Clone)]
pub enum Model {
    GaussianLinear(GaussianLinear),
    Mixture2(Mixture2),
}

/// Per-observation marginal law under a fixed θ. Both families are products
/// over coordinates, which is what the MCMC proposal resamples from.
#[derive(Debug, Clone)]
pub enum CoordinateLaw {
    Normal { means: Vector, sd: f64 },
    Mixture2 { pi1: f64, mu1: f64, s1: f64, mu2: f64, s2: f64 },
}

impl CoordinateLaw {
    pub fn sample<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        match *self {
            CoordinateLaw::Normal { ref means, sd } => means[i] + sd * z,
            CoordinateLaw::Mixture2 { pi1, mu1, s1, mu2, s2 } => {
                if rng.random::<f64>() < pi1 {
                    mu1 + s1 * z
                } else {
                    mu2 + s2 * z
                }
            }
        }
    }

    pub fn log_pdf(&self, i: usize, xi: f64) -> f64 {
        match *self {
            CoordinateLaw::Normal { ref means, sd } => normal_log_pdf(xi, means[i], sd),
            CoordinateLaw::Mixture2 { pi1, mu1, s1, mu2, s2 } => {
                log_add(pi1.ln() + normal_log_pdf(xi, mu1, s1), (1.0 - pi1).ln() + normal_log_pdf(xi, mu2, s2))
            }
        }
    }
}

pub fn normal_log_pdf(x: f64, mu: f64, sd: f64) -> f64 {
    let r = (x - mu) / sd;
    -0.5 * LN_2PI - sd.ln() - 0.5 * r * r
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Per-θ constants of the mixture log-density.
#[derive(Debug, Clone, Copy)]
pub(crate) struct MixtureTerms {
    p: f64,
    m1: f64,
    m2: f64,
    s1: f64,
    s2: f64,
    inv1: f64,
    inv2: f64,
    c1: f64,
    c2: f64,
}

impl MixtureTerms {
    pub(crate) fn new(t: &[f64]) -> Self {
        let (p, m1, s1, m2, s2) = (t[0], t[1], t[2], t[3], t[4]);
        MixtureTerms {
            p,
            m1,
            m2,
            s1,
            s2,
            inv1: 1.0 / (s1 * s1),
            inv2: 1.0 / (s2 * s2),
            c1: p.ln() - s1.ln() - 0.5 * LN_2PI,
            c2: (1.0 - p).ln() - s2.ln() - 0.5 * LN_2PI,
        }
    }

    /// Log-density and the two posterior component weights.
    #[inline]
    pub(crate) fn log_density(&self, x: f64) -> (f64, f64, f64) {
        let (e1, e2) = (x - self.m1, x - self.m2);
        let a1 = self.c1 - 0.5 * e1 * e1 * self.inv1;
        let a2 = self.c2 - 0.5 * e2 * e2 * self.inv2;
        let d = a2 - a1;
        if d <= 0.0 {
            let q = d.exp();
            (a1 + q.ln_1p(), 1.0 / (1.0 + q), q / (1.0 + q))
        } else {
            let q = (-d).exp();
            (a2 + q.ln_1p(), q / (1.0 + q), 1.0 / (1.0 + q))
        }
    }

    /// Posterior component weights only.
    #[inline]
    pub(crate) fn weights(&self, x: f64) -> (f64, f64) {
        let (e1, e2) = (x - self.m1, x - self.m2);
        let d = (self.c2 - 0.5 * e2 * e2 * self.inv2) - (self.c1 - 0.5 * e1 * e1 * self.inv1);
        if d <= 0.0 {
            let q = d.exp();
            (1.0 / (1.0 + q), q / (1.0 + q))
        } else {
            let q = (-d).exp();
            (q / (1.0 + q), 1.0 / (1.0 + q))
        }
    }

    /// Add `sign` times the negative log-density of one observation, its
    /// gradient and (optionally) Hessian in θ.
    #[inline]
    pub(crate) fn accumulate(&self, x: f64, sign: f64, nll: &mut f64, g: &mut [f64; 5], h: Option<&mut [[f64; 5]; 5]>) {
        let (lse, r1, r2) = self.log_density(x);
        let (p, s1, s2) = (self.p, self.s1, self.s2);
        let (e1, e2) = (x - self.m1, x - self.m2);
        // component score vectors, nonzero on (0, 1, 2) and (0, 3, 4)
        let g1 = [1.0 / p, e1 * self.inv1, e1 * e1 * self.inv1 / s1 - 1.0 / s1];
        let g2 = [-1.0 / (1.0 - p), e2 * self.inv2, e2 * e2 * self.inv2 / s2 - 1.0 / s2];
        let gm = [r1 * g1[0] + r2 * g2[0], r1 * g1[1], r1 * g1[2], r2 * g2[1], r2 * g2[2]];
        *nll -= sign * lse;
        for k in 0..5 {
            g[k] -= sign * gm[k];
        }
        let Some(h) = h else { return };
        let h1 = [
            -1.0 / (p * p),
            -self.inv1,
            -2.0 * e1 * self.inv1 / s1,
            -3.0 * e1 * e1 * self.inv1 * self.inv1 + self.inv1,
        ];
        let h2 = [
            -1.0 / ((1.0 - p) * (1.0 - p)),
            -self.inv2,
            -2.0 * e2 * self.inv2 / s2,
            -3.0 * e2 * e2 * self.inv2 * self.inv2 + self.inv2,
        ];
        // second moment r1(h1 + g1g1ᵀ) + r2(h2 + g2g2ᵀ), embedded in 5×5
        let mut sm = [[0.0; 5]; 5];
        sm[0][0] = r1 * (h1[0] + g1[0] * g1[0]) + r2 * (h2[0] + g2[0] * g2[0]);
        sm[0][1] = r1 * g1[0] * g1[1];
        sm[0][2] = r1 * g1[0] * g1[2];
        sm[0][3] = r2 * g2[0] * g2[1];
        sm[0][4] = r2 * g2[0] * g2[2];
        sm[1][1] = r1 * (h1[1] + g1[1] * g1[1]);
        sm[1][2] = r1 * (h1[2] + g1[1] * g1[2]);
        sm[2][2] = r1 * (h1[3] + g1[2] * g1[2]);
        sm[3][3] = r2 * (h2[1] + g2[1] * g2[1]);
        sm[3][4] = r2 * (h2[2] + g2[1] * g2[2]);
        sm[4][4] = r2 * (h2[3] + g2[2] * g2[2]);
        for a in 0..5 {
            for b in a..5 {
                let v = -sign * (sm[a][b] - gm[a] * gm[b]);
                h[a][b] += v;
                if a != b {
                    h[b][a] += v;
                }
            }
        }
    }
}

fn to_matrix(h: &[[f64; 5]; 5]) -> Matrix {
    Matrix::from_fn(5, 5, |a, b| h[a][b])
}

impl Model {
    pub fn gaussian_linear(z: Matrix, nu2: f64, ridge: f64) -> Result<Self> {
        GaussianLinear::new(z, nu2, ridge).map(Model::GaussianLinear)
    }

    pub fn mixture2(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("mixture sample size must be at least 1"));
        }
        Ok(Model::Mixture2(Mixture2 { n }))
    }

    pub fn dim(&self) -> usize {
        match self {
            Model::GaussianLinear(g) => g.z.ncols(),
            Model::Mixture2(_) => 5,
        }
    }

    /// Length of a data vector.
    pub fn n_obs(&self) -> usize {
        match self {
            Model::GaussianLinear(g) => g.z.nrows(),
            Model::Mixture2(m) => m.n,
        }
    }

    pub fn as_gaussian(&self) -> Option<&GaussianLinear> {
        match self {
            Model::GaussianLinear(g) => Some(g),
            Model::Mixture2(_) => None,
        }
    }

    /// True when `∇²L(θ; x)` does not depend on x.
    pub fn hessian_is_constant(&self) -> bool {
        matches!(self, Model::GaussianLinear(_))
    }

    pub fn check_param(&self, theta: &Vector) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(invalid(format!("parameter has length {}, model dimension is {}", theta.len(), self.dim())));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(AcssError::Domain("non-finite parameter".into()));
        }
        if let Model::Mixture2(_) = self {
            let p = theta[0];
            if p <= DOMAIN_EPS || p >= 1.0 - DOMAIN_EPS {
                return Err(AcssError::Domain(format!("mixing weight {p} not in (0, 1)")));
            }
            for j in [2, 4] {
                if theta[j] <= DOMAIN_EPS {
                    return Err(AcssError::Domain(format!("standard deviation {} not positive", theta[j])));
                }
            }
        }
        Ok(())
    }

    pub fn check_data(&self, x: &Vector) -> Result<()> {
        if let Model::GaussianLinear(g) = self {
            if x.len() != g.z.nrows() {
                return Err(invalid(format!("data has length {}, expected {}", x.len(), g.z.nrows())));
            }
        }
        if x.is_empty() || x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("data must be non-empty and finite"));
        }
        Ok(())
    }

    pub fn neg_log_density(&self, theta: &Vector, x: &Vector) -> Result<f64> {
        self.check_param(theta)?;
        self.check_data(x)?;
        Ok(match self {
            Model::GaussianLinear(g) => {
                let r = x - &g.z * theta;
                r.norm_squared() / (2.0 * g.nu2) + 0.5 * x.len() as f64 * (LN_2PI + g.nu2.ln())
            }
            Model::Mixture2(_) => {
                let m = MixtureTerms::new(theta.as_slice());
                -x.iter().map(|&xi| m.log_density(xi).0).sum::<f64>()
            }
        })
    }

    /// `R(θ)`, `∇R(θ)`, `∇²R(θ)`.
    pub fn regularizer(&self, theta: &Vector) -> (f64, Vector, Matrix) {
        let d = self.dim();
        match self {
            Model::GaussianLinear(g) => {
                (0.5 * g.ridge * theta.norm_squared(), theta * g.ridge, Matrix::identity(d, d) * g.ridge)
            }
            Model::Mixture2(_) => (0.0, Vector::zeros(d), Matrix::zeros(d, d)),
        }
    }

    /// `−log f(x; θ) + R(θ)` and its derivatives: the loss without the noise term.
    pub fn base_loss(&self, theta: &Vector, x: &Vector) -> Result<LossEvaluation> {
        self.check_param(theta)?;
        self.check_data(x)?;
        let (rv, rg, rh) = self.regularizer(theta);
        match self {
            Model::GaussianLinear(g) => {
                let r = x - &g.z * theta;
                let value = r.norm_squared() / (2.0 * g.nu2) + 0.5 * x.len() as f64 * (LN_2PI + g.nu2.ln()) + rv;
                let gradient = -(g.z.transpose() * r) / g.nu2 + rg;
                let hessian = &g.gram / g.nu2 + rh;
                Ok(LossEvaluation { value, gradient, hessian })
            }
            Model::Mixture2(_) => {
                let acc = self.point_sums(theta, x, true);
                Ok(LossEvaluation {
                    value: acc.nll + rv,
                    gradient: acc.grad + rg,
                    hessian: acc.hess.expect("hessian requested") + rh,
                })
            }
        }
    }

    pub fn loss(&self, theta: &Vector, x: &Vector, w: &Perturbation) -> Result<LossEvaluation> {
        if w.values.len() != self.dim() {
            return Err(invalid("perturbation length differs from model dimension"));
        }
        let mut ev = self.base_loss(theta, x)?;
        ev.value += w.sigma * w.values.dot(theta);
        ev.gradient += w.scaled();
        Ok(ev)
    }

    /// `L(θ; x, w)` without derivatives.
    pub fn loss_value(&self, theta: &Vector, x: &Vector, w: &Perturbation) -> Result<f64> {
        if w.values.len() != self.dim() {
            return Err(invalid("perturbation length differs from model dimension"));
        }
        let r = match self {
            Model::GaussianLinear(g) => 0.5 * g.ridge * theta.norm_squared(),
            Model::Mixture2(_) => 0.0,
        };
        Ok(self.neg_log_density(theta, x)? + r + w.sigma * w.values.dot(theta))
    }

    /// Add `sign ×` the contribution of observation `i` (value `xi`) to the
    /// negative log-likelihood sums. θ is assumed already validated.
    pub fn add_point_terms(&self, theta: &Vector, i: usize, xi: f64, sign: f64, acc: &mut PointSums) {
        match self {
            Model::GaussianLinear(g) => {
                let row = g.z.row(i);
                let r = xi - row.dot(&theta.transpose());
                acc.nll += sign * (r * r / (2.0 * g.nu2) + 0.5 * (LN_2PI + g.nu2.ln()));
                let c = -sign * r / g.nu2;
                for (k, zk) in row.iter().enumerate() {
                    acc.grad[k] += c * zk;
                }
                if let Some(h) = acc.hess.as_mut() {
                    for a in 0..row.len() {
                        for b in 0..row.len() {
                            h[(a, b)] += sign * row[a] * row[b] / g.nu2;
                        }
                    }
                }
            }
            Model::Mixture2(_) => {
                let m = MixtureTerms::new(theta.as_slice());
                let mut g = [0.0; 5];
                let mut h = [[0.0; 5]; 5];
                let mut nll = 0.0;
                m.accumulate(xi, sign, &mut nll, &mut g, acc.hess.is_some().then_some(&mut h));
                acc.nll += nll;
                for k in 0..5 {
                    acc.grad[k] += g[k];
                }
                if let Some(hm) = acc.hess.as_mut() {
                    *hm += to_matrix(&h);
                }
            }
        }
    }

    /// Sums of per-observation terms over all of x, without the regularizer.
    pub fn point_sums(&self, theta: &Vector, x: &Vector, with_hessian: bool) -> PointSums {
        if let Model::Mixture2(_) = self {
            let m = MixtureTerms::new(theta.as_slice());
            let (mut nll, mut g, mut h) = (0.0, [0.0; 5], [[0.0; 5]; 5]);
            for &xi in x.iter() {
                m.accumulate(xi, 1.0, &mut nll, &mut g, with_hessian.then_some(&mut h));
            }
            return PointSums { nll, grad: Vector::from_row_slice(&g), hess: with_hessian.then(|| to_matrix(&h)) };
        }
        let mut acc = PointSums::zeros(self.dim(), with_hessian);
        for (i, &xi) in x.iter().enumerate() {
            self.add_point_terms(theta, i, xi, 1.0, &mut acc);
        }
        acc
    }

    pub fn coordinate_law(&self, theta: &Vector) -> Result<CoordinateLaw> {
        self.check_param(theta)?;
        Ok(match self {
            Model::GaussianLinear(g) => CoordinateLaw::Normal { means: &g.z * theta, sd: g.nu2.sqrt() },
            Model::Mixture2(_) => {
                CoordinateLaw::Mixture2 { pi1: theta[0], mu1: theta[1], s1: theta[2], mu2: theta[3], s2: theta[4] }
            }
        })
    }

    /// One draw `X ~ P_θ`.
    pub fn simulate<R: Rng + ?Sized>(&self, theta: &Vector, rng: &mut R) -> Result<Vector> {
        let law = self.coordinate_law(theta)?;
        let n = self.n_obs();
        let mut x = Vector::zeros(n);
        for i in 0..n {
            x[i] = law.sample(i, rng);
        }
        Ok(x)
    }
}

/// Running sums of per-observation negative log-likelihood terms.
#[derive(Debug, Clone)]
pub struct PointSums {
    pub nll: f64,
    pub grad: Vector,
    pub hess: Option<Matrix>,
}

impl PointSums {
    pub fn zeros(d: usize, with_hessian: bool) -> Self {
        PointSums { nll: 0.0, grad: Vector::zeros(d), hess: with_hessian.then(|| Matrix::zeros(d, d)) }
    }
}

/// Config-document description of a model.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    GaussianLinear {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        z_csv: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        z: Option<Vec<Vec<f64>>>,
        nu2: f64,
        #[serde(default)]
        ridge: f64,
    },
    GaussianMixture2 {
        n: usize,
    },
}

impl ModelConfig {
    pub fn build(&self) -> Result<Model> {
        match self {
            ModelConfig::GaussianLinear { z_csv, z, nu2, ridge } => {
                let zm = match (z_csv, z) {
                    (Some(path), None) => read_matrix_csv(path)?,
                    (None, Some(rows)) => matrix_from_rows(rows)?,
                    _ => return Err(invalid("give exactly one of z_csv or z")),
                };
                Model::gaussian_linear(zm, *nu2, *ridge)
            }
            ModelConfig::GaussianMixture2 { n } => Model::mixture2(*n),
        }
    }
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(invalid("matrix must be non-empty"));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
        return Err(invalid(format!("row {bad} has {} entries, expected {ncols}", rows[bad].len())));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Dense row-major CSV without a header.
pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path)?;
    parse_matrix_csv(&text)
}

pub fn parse_matrix_csv(text: &str) -> Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| AcssError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| AcssError::Parse { line, msg: format!("{f:?}: {e}") }))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    matrix_from_rows(&rows)
}
