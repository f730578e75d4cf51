//! Resampling p-value, basis sparsity and effective dimension, and the test
//! statistics used by the experiments.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, AcssError, Result};
use crate::estimation::{cd_quadratic_l1, CdOptions};
use crate::model::{checked_svd, Matrix, Vector};
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct PValue {
    pub value: f64,
    /// Copies with a statistic at least as large as the observed one.
    pub exceed: usize,
    pub m: usize,
}

/// `(1 + #{m : T_m ≥ T_obs}) / (M + 1)`. A NaN copy counts as exceeding and a
/// NaN observation gives 1.
pub fn compute_pvalue(t_obs: f64, t_copies: &[f64]) -> Result<PValue> {
    if t_copies.is_empty() {
        return Err(invalid("p-value needs at least one copy"));
    }
    let m = t_copies.len();
    let exceed = if t_obs.is_nan() { m } else { t_copies.iter().filter(|&&t| !(t < t_obs)).count() };
    Ok(PValue { value: (1 + exceed) as f64 / (m + 1) as f64, exceed, m })
}

#[derive(Debug, Clone, PartialEq)]
pub enum BasisKind {
    Canonical,
    /// `v_i = e_1 + … + e_i`.
    Changepoint,
    General,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsityBasis {
    /// Basis vectors as columns, `d × p`.
    vectors: Matrix,
    kind: BasisKind,
}

impl SparsityBasis {
    pub fn canonical(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(invalid("dimension must be positive"));
        }
        Ok(SparsityBasis { vectors: Matrix::identity(d, d), kind: BasisKind::Canonical })
    }

    pub fn changepoint(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(invalid("dimension must be positive"));
        }
        let v = Matrix::from_fn(d, d, |r, c| if r <= c { 1.0 } else { 0.0 });
        Ok(SparsityBasis { vectors: v, kind: BasisKind::Changepoint })
    }

    pub fn general(vectors: Vec<Vector>) -> Result<Self> {
        let first = vectors.first().ok_or_else(|| invalid("basis needs at least one vector"))?;
        let d = first.len();
        if d == 0 || vectors.iter().any(|v| v.len() != d) {
            return Err(invalid("basis vectors must share a positive dimension"));
        }
        if let Some(i) = vectors.iter().position(|v| v.iter().all(|&t| t == 0.0) || v.iter().any(|t| !t.is_finite())) {
            return Err(invalid(format!("basis vector {i} is zero or not finite")));
        }
        Ok(SparsityBasis { vectors: Matrix::from_columns(&vectors), kind: BasisKind::General })
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn len(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> &BasisKind {
        &self.kind
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }
}

const SPAN_RTOL: f64 = 1e-10;
const MAX_SUBSETS: f64 = 1e6;
const MAX_BASIS_BYTES: f64 = 1e9;

fn binomial(p: usize, k: usize) -> f64 {
    let k = k.min(p - k.min(p));
    (0..k).fold(1.0, |acc, i| acc * (p - i) as f64 / (i + 1) as f64)
}

/// Visit every k-subset of `0..p` in lexicographic order.
fn for_each_subset(p: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > p {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] < p - k + i) else { return };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Orthonormal basis of the span of the given columns.
fn span_basis(v: &Matrix, cols: &[usize]) -> Matrix {
    let d = v.nrows();
    if cols.is_empty() {
        return Matrix::zeros(d, 0);
    }
    let sub = v.select_columns(cols);
    let svd = checked_svd(&sub);
    let u = svd.u.expect("left singular vectors");
    let smax = svd.singular_values.amax();
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > 1e-10 * smax).collect();
    u.select_columns(&keep)
}

/// Minimum number of basis vectors whose span contains `w`; `None` when `w`
/// is outside the span of the whole basis.
pub fn v_sparsity(w: &Vector, basis: &SparsityBasis) -> Result<Option<usize>> {
    let d = basis.dim();
    if w.len() != d {
        return Err(invalid(format!("vector has length {}, basis dimension is {d}", w.len())));
    }
    let scale = w.amax();
    if scale == 0.0 {
        return Ok(Some(0));
    }
    let tol = SPAN_RTOL * scale;
    match basis.kind {
        BasisKind::Canonical => Ok(Some(w.iter().filter(|t| t.abs() > tol).count())),
        BasisKind::Changepoint => {
            let count = (0..d).filter(|&i| (w[i] - if i + 1 < d { w[i + 1] } else { 0.0 }).abs() > tol).count();
            Ok(Some(count))
        }
        BasisKind::General => {
            let p = basis.len();
            let in_span = |cols: &[usize]| {
                let q = span_basis(&basis.vectors, cols);
                (w - &q * (q.transpose() * w)).amax() <= tol
            };
            if !in_span(&(0..p).collect::<Vec<_>>()) {
                return Ok(None);
            }
            let kmax = p.min(d);
            let total: f64 = (1..=kmax).map(|k| binomial(p, k)).sum();
            if total > MAX_SUBSETS && (p > d && d > 20) {
                return Err(AcssError::Unsupported(format!("subset search over {p} vectors in dimension {d}")));
            }
            for k in 1..=kmax {
                let mut found = false;
                let mut budget_left = true;
                let mut seen = 0f64;
                for_each_subset(p, k, |s| {
                    if found || !budget_left {
                        return;
                    }
                    seen += 1.0;
                    if seen > MAX_SUBSETS {
                        budget_left = false;
                        return;
                    }
                    found = in_span(s);
                });
                if found {
                    return Ok(Some(k));
                }
                if !budget_left {
                    return Err(AcssError::Unsupported(format!("more than {MAX_SUBSETS} subsets of size {k}")));
                }
            }
            Ok(Some(kmax))
        }
    }
}

/// `min(4k ln(4p/k), d)`.
pub fn h_v_bound(k: usize, p: usize, d: usize) -> Result<f64> {
    if k < 1 || k > d {
        return Err(invalid(format!("need 1 <= k <= d, got k={k}, d={d}")));
    }
    if p == 0 {
        return Err(invalid("basis size must be positive"));
    }
    let k = k as f64;
    Ok((4.0 * k * (4.0 * p as f64 / k).ln()).min(d as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HvEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// Exact maximisation was skipped; `mean` is the analytic bound.
    pub bound_only: bool,
}

/// Changepoint dimensions above this fall back to the bound.
pub const CHANGEPOINT_MAX_DIM: usize = 20;

/// Largest `‖P_S z‖²` over changepoint subsets with `|S| ≤ k`. Spans of such
/// subsets are the vectors constant on consecutive segments ending at the
/// chosen indices and zero after the last one.
pub fn changepoint_max_projection(z: &Vector, k: usize) -> f64 {
    let d = z.len();
    let mut prefix = vec![0.0; d + 1];
    for i in 0..d {
        prefix[i + 1] = prefix[i] + z[i];
    }
    let seg = |a: usize, b: usize| {
        let s = prefix[b] - prefix[a];
        s * s / (b - a) as f64
    };
    // best[m][j]: prefix 0..j split into exactly m segments
    let mut best = vec![vec![f64::NEG_INFINITY; d + 1]; k + 1];
    best[0][0] = 0.0;
    let mut answer = 0.0f64;
    for m in 1..=k {
        for j in 1..=d {
            let mut v = f64::NEG_INFINITY;
            for a in (m - 1)..j {
                if best[m - 1][a] > f64::NEG_INFINITY {
                    v = v.max(best[m - 1][a] + seg(a, j));
                }
            }
            best[m][j] = v;
            answer = answer.max(v);
        }
    }
    answer
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo estimate of `E max_{|S| ≤ k} ‖P_{v_S} Z‖²` for standard normal `Z`.
pub fn h_v_mc<R: Rng + ?Sized>(basis: &SparsityBasis, k: usize, n_samples: usize, rng: &mut R) -> Result<HvEstimate> {
    let d = basis.dim();
    let p = basis.len();
    if n_samples < 2 {
        return Err(invalid("need at least two samples"));
    }
    let bound = h_v_bound(k, p, d)?;
    let k = k.min(p);
    let draw = |rng: &mut R| Vector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let values: Vec<f64> = match basis.kind {
        BasisKind::Canonical => (0..n_samples)
            .map(|_| {
                let mut sq: Vec<f64> = draw(rng).iter().map(|t| t * t).collect();
                sq.sort_by(|a, b| b.total_cmp(a));
                sq[..k].iter().sum()
            })
            .collect(),
        BasisKind::Changepoint => {
            if d > CHANGEPOINT_MAX_DIM {
                return Ok(HvEstimate { mean: bound, stderr: 0.0, bound_only: true });
            }
            (0..n_samples).map(|_| changepoint_max_projection(&draw(rng), k)).collect()
        }
        BasisKind::General => {
            let subsets = binomial(p, k);
            if subsets > MAX_SUBSETS || subsets * (d * k) as f64 * 8.0 > MAX_BASIS_BYTES {
                return Err(AcssError::Unsupported(format!("{subsets} subsets of size {k} is too many to enumerate")));
            }
            let mut qs = Vec::with_capacity(subsets as usize);
            for_each_subset(p, k, |s| qs.push(span_basis(&basis.vectors, s).transpose()));
            (0..n_samples)
                .map(|_| {
                    let z = draw(rng);
                    qs.iter().map(|q| (q * &z).norm_squared()).fold(0.0, f64::max)
                })
                .collect()
        }
    };
    let (mean, stderr) = mean_stderr(&values);
    Ok(HvEstimate { mean, stderr, bound_only: false })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatValue {
    pub value: f64,
    pub warning: Option<&'static str>,
}

/// A test statistic `T(x)`; every variant is a deterministic function of `x`.
#[derive(Debug, Clone)]
pub enum Statistic {
    /// Best-of-restarts WCSS with two clusters minus that with three.
    KmeansWcssDecrease {
        restarts: usize,
        seed: u64,
    },
    AbsCorrelation {
        y: Vector,
    },
    /// `|β̂_X|` for `½‖y − xβ_X − Zβ‖² + (λ_ridge/2)‖β‖² + λ‖β‖₁`.
    ElasticNetCoef(Box<EnetStatistic>),
}

#[derive(Debug, Clone)]
pub struct EnetStatistic {
    y: Vector,
    z: Matrix,
    ztz: Matrix,
    zty: Vector,
    lambda_ridge: f64,
    lambda_l1: f64,
    opts: CdOptions,
}

pub const KMEANS_RESTARTS: usize = 10;
pub const ENET_STAT_RIDGE: f64 = 3.0;
pub const ENET_STAT_L1: f64 = 7.0;

impl Statistic {
    pub fn kmeans(seed: u64) -> Self {
        Statistic::KmeansWcssDecrease { restarts: KMEANS_RESTARTS, seed }
    }

    pub fn abs_correlation(y: Vector) -> Self {
        Statistic::AbsCorrelation { y }
    }

    pub fn elastic_net_coef(y: Vector, z: Matrix, lambda_ridge: f64, lambda_l1: f64) -> Result<Self> {
        if z.nrows() != y.len() {
            return Err(invalid("response and covariates disagree in length"));
        }
        if !(lambda_ridge >= 0.0 && lambda_l1 >= 0.0) {
            return Err(invalid("penalties must be nonnegative"));
        }
        let ztz = z.transpose() * &z;
        let zty = z.transpose() * &y;
        Ok(Statistic::ElasticNetCoef(Box::new(EnetStatistic {
            y,
            z,
            ztz,
            zty,
            lambda_ridge,
            lambda_l1,
            opts: CdOptions { max_sweeps: 100_000, step_tol: 1e-12, kkt_tol: 1e-9 },
        })))
    }

    pub fn evaluate(&self, x: &Vector) -> Result<f64> {
        Ok(self.evaluate_detailed(x)?.value)
    }

    pub fn evaluate_detailed(&self, x: &Vector) -> Result<StatValue> {
        if x.iter().any(|t| !t.is_finite()) {
            return Err(AcssError::Domain("statistic input has non-finite entries".into()));
        }
        match self {
            Statistic::KmeansWcssDecrease { restarts, seed } => {
                if x.len() < 3 {
                    return Err(invalid("k-means statistic needs at least three points"));
                }
                let w2 = kmeans_1d_wcss(x.as_slice(), 2, *restarts, derive_seed(*seed, &[2]));
                let w3 = kmeans_1d_wcss(x.as_slice(), 3, *restarts, derive_seed(*seed, &[3]));
                Ok(StatValue { value: w2 - w3, warning: None })
            }
            Statistic::AbsCorrelation { y } => {
                if y.len() != x.len() {
                    return Err(invalid("x and y disagree in length"));
                }
                Ok(abs_correlation(x, y))
            }
            Statistic::ElasticNetCoef(e) => e.evaluate(x),
        }
    }
}

fn abs_correlation(x: &Vector, y: &Vector) -> StatValue {
    let n = x.len() as f64;
    let (mx, my) = (x.sum() / n, y.sum() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y.iter()) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return StatValue { value: 0.0, warning: Some("zero variance in correlation") };
    }
    StatValue { value: (sxy / (sxx * syy).sqrt()).abs().min(1.0), warning: None }
}

impl EnetStatistic {
    fn evaluate(&self, x: &Vector) -> Result<StatValue> {
        let n = self.y.len();
        if x.len() != n {
            return Err(invalid("x and y disagree in length"));
        }
        let xx = x.norm_squared();
        if xx == 0.0 {
            return Ok(StatValue { value: 0.0, warning: Some("zero covariate in elastic-net statistic") });
        }
        let q = self.z.ncols();
        let ztx = self.z.transpose() * x;
        let mut h = Matrix::zeros(q + 1, q + 1);
        h[(0, 0)] = xx;
        for j in 0..q {
            h[(0, j + 1)] = ztx[j];
            h[(j + 1, 0)] = ztx[j];
            for i in 0..q {
                h[(i + 1, j + 1)] = self.ztz[(i, j)];
            }
            h[(j + 1, j + 1)] += self.lambda_ridge;
        }
        let mut c = Vector::zeros(q + 1);
        c[0] = -x.dot(&self.y);
        for j in 0..q {
            c[j + 1] = -self.zty[j];
        }
        let mut l1 = vec![self.lambda_l1; q + 1];
        l1[0] = 0.0;
        let r = cd_quadratic_l1(&h, &c, &l1, None, None, &self.opts)?;
        let warning = (!r.converged).then_some("elastic-net statistic did not converge");
        Ok(StatValue { value: r.theta[0].abs(), warning })
    }
}

/// Lloyd iterations in one dimension from k-means++ seeds; the smallest WCSS
/// over `restarts` runs.
pub fn kmeans_1d_wcss(x: &[f64], k: usize, restarts: usize, seed: u64) -> f64 {
    let mut best = f64::INFINITY;
    for r in 0..restarts.max(1) {
        let mut rng = seeded(derive_seed(seed, &[r as u64]));
        let mut centers = kmeanspp(x, k, &mut rng);
        let mut assign = vec![usize::MAX; x.len()];
        for _ in 0..300 {
            let mut changed = false;
            for (i, &v) in x.iter().enumerate() {
                let c = nearest(&centers, v).0;
                if assign[i] != c {
                    assign[i] = c;
                    changed = true;
                }
            }
            let mut sums = vec![(0.0, 0usize); k];
            for (i, &v) in x.iter().enumerate() {
                sums[assign[i]].0 += v;
                sums[assign[i]].1 += 1;
            }
            for (c, &(s, m)) in sums.iter().enumerate() {
                if m > 0 {
                    centers[c] = s / m as f64;
                }
            }
            if !changed {
                break;
            }
        }
        let wcss: f64 = x.iter().map(|&v| nearest(&centers, v).1).sum();
        best = best.min(wcss);
    }
    best
}

fn nearest(centers: &[f64], v: f64) -> (usize, f64) {
    let mut out = (0, f64::INFINITY);
    for (c, &m) in centers.iter().enumerate() {
        let d2 = (v - m) * (v - m);
        if d2 < out.1 {
            out = (c, d2);
        }
    }
    out
}

fn kmeanspp<R: Rng + ?Sized>(x: &[f64], k: usize, rng: &mut R) -> Vec<f64> {
    let mut centers = vec![x[rng.random_range(0..x.len())]];
    while centers.len() < k {
        let d2: Vec<f64> = x.iter().map(|&v| nearest(&centers, v).1).collect();
        let total: f64 = d2.iter().sum();
        if total == 0.0 {
            centers.push(x[rng.random_range(0..x.len())]);
            continue;
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = x.len() - 1;
        for (i, &w) in d2.iter().enumerate() {
            if u < w {
                pick = i;
                break;
            }
            u -= w;
        }
        centers.push(x[pick]);
    }
    centers
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use statrs::function::erf::erf;

    #[test]
    fn pvalue_examples() {
        assert_eq!(compute_pvalue(5.0, &[1.0, 2.0, 3.0]).unwrap().value, 0.25);
        assert_eq!(compute_pvalue(2.0, &[2.0; 4]).unwrap().value, 1.0);
        assert_eq!(compute_pvalue(0.0, &[1.0; 4]).unwrap().value, 1.0);
        assert!(compute_pvalue(0.0, &[]).is_err());
        assert_eq!(compute_pvalue(f64::NAN, &[1.0]).unwrap().value, 1.0);
    }

    proptest! {
        #[test]
        fn pvalue_on_grid_and_monotone(copies in prop::collection::vec(-3.0f64..3.0, 1..40), a in -4.0f64..4.0, b in -4.0f64..4.0) {
            let m = copies.len();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let p_lo = compute_pvalue(lo, &copies).unwrap();
            let p_hi = compute_pvalue(hi, &copies).unwrap();
            prop_assert!(p_hi.value <= p_lo.value);
            for p in [p_lo, p_hi] {
                prop_assert_eq!(p.value, (1 + p.exceed) as f64 / (m + 1) as f64);
                prop_assert!(p.value > 0.0 && p.value <= 1.0);
            }
        }
    }

    #[test]
    fn sparsity_examples() {
        let w = Vector::from_vec(vec![0.0, 3.0, 0.0, -1.0]);
        assert_eq!(v_sparsity(&w, &SparsityBasis::canonical(4).unwrap()).unwrap(), Some(2));
        let cp = SparsityBasis::changepoint(6).unwrap();
        let step = Vector::from_vec(vec![1.0, 1.0, 2.0, 2.0, 2.0, -1.0]);
        assert_eq!(v_sparsity(&step, &cp).unwrap(), Some(3));
        assert_eq!(v_sparsity(&Vector::zeros(6), &cp).unwrap(), Some(0));
        let g = SparsityBasis::general(vec![Vector::from_vec(vec![1.0, 0.0, 0.0])]).unwrap();
        assert_eq!(v_sparsity(&Vector::from_vec(vec![0.0, 1.0, 0.0]), &g).unwrap(), None);
        assert!(SparsityBasis::general(vec![Vector::zeros(2)]).is_err());
    }

    fn general_changepoint(d: usize) -> SparsityBasis {
        let cols = (0..d).map(|i| Vector::from_fn(d, |r, _| if r <= i { 1.0 } else { 0.0 })).collect();
        SparsityBasis::general(cols).unwrap()
    }

    proptest! {
        #[test]
        fn changepoint_sparsity_matches_subset_search(levels in prop::collection::vec(-2i32..3, 1..9)) {
            let d = levels.len();
            let w = Vector::from_iterator(d, levels.iter().map(|&l| l as f64));
            let closed = v_sparsity(&w, &SparsityBasis::changepoint(d).unwrap()).unwrap();
            let brute = v_sparsity(&w, &general_changepoint(d)).unwrap();
            prop_assert_eq!(closed, brute);
            let canon = v_sparsity(&w, &SparsityBasis::canonical(d).unwrap()).unwrap();
            prop_assert_eq!(canon, Some(levels.iter().filter(|&&l| l != 0).count()));
        }

        #[test]
        fn changepoint_dp_matches_enumeration(zs in prop::collection::vec(-3.0f64..3.0, 1..9), k in 1usize..9) {
            let d = zs.len();
            let k = k.min(d);
            let z = Vector::from_vec(zs);
            let basis = general_changepoint(d);
            let mut brute = 0.0f64;
            for size in 1..=k {
                for_each_subset(d, size, |s| {
                    let q = span_basis(basis.vectors(), s);
                    brute = brute.max((q.transpose() * &z).norm_squared());
                });
            }
            let dp = changepoint_max_projection(&z, k);
            prop_assert!((dp - brute).abs() <= 1e-9 * (1.0 + brute), "{} vs {}", dp, brute);
        }
    }

    #[test]
    fn bound_arithmetic() {
        assert_eq!(h_v_bound(5, 7, 5).unwrap(), 5.0);
        assert!((h_v_bound(1, 4, 100).unwrap() - 4.0 * 16f64.ln()).abs() < 1e-12);
        assert!((h_v_bound(2, 100, 1000).unwrap() - 8.0 * 200f64.ln()).abs() < 1e-12);
        assert!((8.0 * 200f64.ln() - 42.386).abs() < 1e-3);
        assert!(h_v_bound(0, 3, 3).is_err() && h_v_bound(4, 3, 3).is_err());
    }

    /// `E max(Z₁², Z₂²) = ∫₀^∞ P(max > t) dt`, integrated with `t = u²`.
    fn max_two_chisq_mean() -> f64 {
        let f = |u: f64| 2.0 * u * (1.0 - erf(u / 2f64.sqrt()).powi(2));
        let (a, b, n) = (0.0, 12.0, 20_000);
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn effective_dimension_oracles() {
        let oracle = max_two_chisq_mean();
        assert!((oracle - 1.636).abs() < 1e-3);
        let mut rng = seeded(12);
        let e = h_v_mc(&SparsityBasis::canonical(2).unwrap(), 1, 200_000, &mut rng).unwrap();
        assert!((e.mean - oracle).abs() < 3.0 * e.stderr, "{e:?} vs {oracle}");
        let full = h_v_mc(&SparsityBasis::canonical(6).unwrap(), 6, 50_000, &mut rng).unwrap();
        assert!((full.mean - 6.0).abs() < 3.0 * full.stderr);
        let gen = h_v_mc(&general_changepoint(5), 2, 2000, &mut rng).unwrap();
        assert!(gen.mean <= h_v_bound(2, 5, 5).unwrap() + 3.0 * gen.stderr);
        let big = h_v_mc(&SparsityBasis::changepoint(30).unwrap(), 2, 10, &mut rng).unwrap();
        assert!(big.bound_only);
    }

    #[test]
    fn canonical_effective_dimension_grows_with_k() {
        let basis = SparsityBasis::canonical(8).unwrap();
        let est: Vec<f64> = (1..=8).map(|k| h_v_mc(&basis, k, 4000, &mut seeded(5)).unwrap().mean).collect();
        assert!(est.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn kmeans_statistic() {
        let x = Vector::from_vec(vec![0.0, 0.0, 0.0, 5.0, 5.0, 5.0, 10.0, 10.0, 10.0]);
        let t = Statistic::kmeans(1);
        let v = t.evaluate(&x).unwrap();
        assert!((v - 37.5).abs() < 1e-9, "{v}");
        assert_eq!(v, t.evaluate(&x).unwrap());
        let wcss1 = kmeans_1d_wcss(x.as_slice(), 1, 1, 0);
        assert!((wcss1 - 150.0).abs() < 1e-9);
    }

    #[test]
    fn correlation_statistic() {
        let x = Vector::from_vec(vec![1.0, 2.0, 4.0, 3.0]);
        assert!((Statistic::abs_correlation(x.clone()).evaluate(&x).unwrap() - 1.0).abs() < 1e-12);
        let neg = Statistic::abs_correlation(-&x * 2.0);
        assert!((neg.evaluate(&x).unwrap() - 1.0).abs() < 1e-12);
        let flat = Statistic::abs_correlation(x.clone()).evaluate_detailed(&Vector::from_element(4, 3.0)).unwrap();
        assert_eq!(flat.value, 0.0);
        assert!(flat.warning.is_some());
    }

    #[test]
    fn enet_statistic_matches_closed_form_with_orthogonal_columns() {
        // x ⟂ Z columns, Z orthonormal: β_X = xᵀy/‖x‖², β_j = soft(zⱼᵀy, λ)/(1 + ridge)
        let n = 4;
        let x = Vector::from_vec(vec![1.0, 1.0, 1.0, 1.0]);
        let z = Matrix::from_column_slice(n, 2, &[0.5, 0.5, -0.5, -0.5, 0.5, -0.5, 0.5, -0.5]);
        let y = Vector::from_vec(vec![3.0, 1.0, -2.0, 0.5]);
        let t = Statistic::elastic_net_coef(y.clone(), z, ENET_STAT_RIDGE, ENET_STAT_L1).unwrap();
        let v = t.evaluate(&x).unwrap();
        assert!((v - (x.dot(&y) / 4.0).abs()).abs() < 1e-10);
    }

    #[test]
    fn enet_statistic_satisfies_kkt() {
        let mut rng = seeded(4);
        let (n, q) = (30, 12);
        let z = Matrix::from_fn(n, q, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y =
            Vector::from_fn(n, |i, _| 0.3 * x[i] + 2.0 * z[(i, 0)] + rng.sample::<f64, StandardNormal>(StandardNormal));
        let t = Statistic::elastic_net_coef(y.clone(), z.clone(), 3.0, 7.0).unwrap();
        let v = t.evaluate_detailed(&x).unwrap();
        assert!(v.warning.is_none());
        // independent check: the unpenalized coordinate solves its normal equation at the fitted β
        let Statistic::ElasticNetCoef(e) = &t else { unreachable!() };
        let d = Matrix::from_fn(n, q + 1, |i, j| if j == 0 { x[i] } else { z[(i, j - 1)] });
        let mut h = d.transpose() * &d;
        for j in 1..=q {
            h[(j, j)] += 3.0;
        }
        let c = -(d.transpose() * &y);
        let mut l1 = vec![7.0; q + 1];
        l1[0] = 0.0;
        let r = cd_quadratic_l1(&h, &c, &l1, None, None, &e.opts).unwrap();
        assert!(r.kkt_residual < 1e-8);
        assert!((r.theta[0].abs() - v.value).abs() < 1e-10);
    }
}
