//! Copies of the data drawn from the plug-in conditional law: exact draws for
//! Gaussian linear models, hub-and-spoke Metropolis–Hastings otherwise.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::conditional::{ConditioningState, DensityCache, LogDensityValue};
use crate::error::{invalid, AcssError, Result};
use crate::estimation::fit;
use crate::model::{draw_perturbation, Matrix, Vector};
use crate::rng::stream_rng;

pub const MAX_CHAIN_LENGTH: usize = 2000;
/// Candidates whose average acceptance falls below this are not eligible.
pub const MIN_TUNED_ACCEPTANCE: f64 = 0.05;
pub const TUNING_DRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub enum SamplingMethod {
    ExactGaussian,
    HubAndSpoke {
        l: usize,
        s: usize,
        hub: Vector,
    },
    /// The fit was not an SSOSP; every copy is the data itself.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CopySet {
    pub copies: Vec<Vector>,
    pub method: SamplingMethod,
    /// Fraction of accepted proposals over hub and spokes (MCMC only).
    pub acceptance_rate: Option<f64>,
}

impl CopySet {
    pub fn degenerate(x: &Vector, m: usize) -> Self {
        CopySet { copies: vec![x.clone(); m], method: SamplingMethod::Degenerate, acceptance_rate: None }
    }
}

/// Precomputed affine map for exact draws: `mean + ν L⁻ᵀ ξ`.
#[derive(Debug, Clone)]
pub struct GaussianConditional {
    pub mean: Vector,
    chol_l: Matrix,
    nu: f64,
}

impl GaussianConditional {
    pub fn new(state: &ConditioningState) -> Result<Self> {
        let g = state
            .problem()
            .model
            .as_gaussian()
            .ok_or_else(|| AcssError::Unsupported("exact sampling needs a Gaussian linear model".into()))?;
        let z = g.z();
        let n = z.nrows();
        let d = state.dim() as f64;
        let s2 = state.sigma() * state.sigma();
        let k = Matrix::identity(n, n) + (z * z.transpose()) * (d / (s2 * g.nu2()));
        let chol = k.cholesky().ok_or_else(|| AcssError::Internal("conditional covariance factor failed".into()))?;
        let shift = chol.solve(&(z * (state.reg_grad() - state.g_hat()))) * (d / s2);
        let mean = z * state.theta_hat() + shift;
        Ok(GaussianConditional { mean, chol_l: chol.l(), nu: g.nu2().sqrt() })
    }

    /// `ν² K⁻¹` with `K = I + (d/(σ²ν²)) ZZᵀ`.
    pub fn covariance(&self) -> Matrix {
        let n = self.mean.len();
        let linv = self.chol_l.clone().solve_lower_triangular(&Matrix::identity(n, n)).expect("triangular factor");
        linv.transpose() * linv * (self.nu * self.nu)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let n = self.mean.len();
        let xi = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let lt = self.chol_l.transpose();
        let y = lt.solve_upper_triangular(&xi).expect("triangular factor");
        &self.mean + y * self.nu
    }
}

pub fn sample_exact_gaussian<R: Rng + ?Sized>(state: &ConditioningState, m: usize, rng: &mut R) -> Result<CopySet> {
    if m == 0 {
        return Err(invalid("need at least one copy"));
    }
    let gc = GaussianConditional::new(state)?;
    let copies = (0..m).map(|_| gc.draw(rng)).collect();
    Ok(CopySet { copies, method: SamplingMethod::ExactGaussian, acceptance_rate: None })
}

/// A Metropolis–Hastings target with its proposal. `admits` is the costly
/// part of the target's support check; it runs only for proposals that would
/// otherwise be accepted.
pub trait MhKernel {
    type State: Clone + Send + Sync;

    /// Candidate and `log q(current | cand) − log q(cand | current)`.
    fn propose<R: Rng + ?Sized>(&self, current: &Self::State, rng: &mut R) -> (Self::State, f64);
    /// `log p(cand) − log p(current)` up to the deferred support check.
    fn log_target_ratio(&self, cand: &Self::State, current: &Self::State) -> f64;
    fn admits(&self, _cand: &Self::State) -> bool {
        true
    }
    /// Hook run on acceptance.
    fn accept(&self, cand: Self::State) -> Self::State {
        cand
    }
}

/// `min(1, exp(log_ratio))` with NaN treated as rejection.
pub fn acceptance_probability(log_ratio: f64) -> f64 {
    if log_ratio.is_nan() {
        0.0
    } else {
        log_ratio.min(0.0).exp()
    }
}

/// One MH transition; returns the next state and whether it moved.
pub fn mh_step<K: MhKernel, R: Rng + ?Sized>(kernel: &K, current: &K::State, rng: &mut R) -> (K::State, bool) {
    let (cand, log_q) = kernel.propose(current, rng);
    let a = acceptance_probability(kernel.log_target_ratio(&cand, current) + log_q);
    let u: f64 = rng.random();
    if u < a && kernel.admits(&cand) {
        (kernel.accept(cand), true)
    } else {
        (current.clone(), false)
    }
}

fn run_chain<K: MhKernel, R: Rng + ?Sized>(kernel: &K, start: K::State, l: usize, rng: &mut R) -> (K::State, usize) {
    let mut state = start;
    let mut accepted = 0;
    for _ in 0..l {
        let (next, moved) = mh_step(kernel, &state, rng);
        state = next;
        accepted += moved as usize;
    }
    (state, accepted)
}

/// Hub chain from `start` on stream 0, then spoke `m` from the hub on stream
/// `m + 1`. Returns the hub, the spokes and the overall acceptance rate.
pub fn hub_and_spoke_states<K: MhKernel + Sync>(
    kernel: &K,
    start: K::State,
    m: usize,
    l: usize,
    seed: u64,
) -> Result<(K::State, Vec<K::State>, f64)> {
    if m == 0 || l == 0 {
        return Err(invalid("hub-and-spoke needs m >= 1 and l >= 1"));
    }
    let (hub, hub_acc) = run_chain(kernel, start, l, &mut stream_rng(seed, 0));
    let spokes: Vec<(K::State, usize)> = (0..m)
        .into_par_iter()
        .map(|k| run_chain(kernel, hub.clone(), l, &mut stream_rng(seed, k as u64 + 1)))
        .collect();
    let accepted = hub_acc + spokes.iter().map(|s| s.1).sum::<usize>();
    let rate = accepted as f64 / ((m + 1) * l) as f64;
    Ok((hub, spokes.into_iter().map(|s| s.0).collect(), rate))
}

/// Chain state for the aCSS target: the data and its density cache.
#[derive(Debug, Clone)]
pub struct AcssChainState {
    pub x: Vector,
    cache: DensityCache,
    value: LogDensityValue,
    touched: Vec<usize>,
}

/// Resample `s` uniformly chosen coordinates from the fitted per-coordinate
/// law; the target is the plug-in conditional density.
pub struct AcssKernel<'a> {
    pub state: &'a ConditioningState,
    pub s: usize,
    pub check_membership: bool,
}

impl<'a> AcssKernel<'a> {
    pub fn new(state: &'a ConditioningState, s: usize, check_membership: bool) -> Result<Self> {
        let n = state.n_obs();
        if s == 0 || s > n {
            return Err(invalid(format!("proposal size {s} not in [1, {n}]")));
        }
        Ok(AcssKernel { state, s, check_membership })
    }

    pub fn start(&self, x: &Vector) -> AcssChainState {
        let cache = self.state.cache(x);
        let value = self.state.value_from_cache(&cache);
        AcssChainState { x: x.clone(), cache, value, touched: Vec::new() }
    }
}

impl MhKernel for AcssKernel<'_> {
    type State = AcssChainState;

    fn propose<R: Rng + ?Sized>(&self, current: &AcssChainState, rng: &mut R) -> (AcssChainState, f64) {
        let law = self.state.coordinate_law();
        let idx = sample_indices(rng, current.x.len(), self.s).into_vec();
        let mut x = current.x.clone();
        let mut log_q = 0.0;
        for &i in &idx {
            x[i] = law.sample(i, rng);
            log_q += law.log_pdf(i, current.x[i]) - law.log_pdf(i, x[i]);
        }
        let cache = self.state.updated_cache(&current.cache, &current.x, &x, &idx);
        let value = self.state.value_from_cache(&cache);
        (AcssChainState { x, cache, value, touched: idx }, log_q)
    }

    fn log_target_ratio(&self, cand: &AcssChainState, current: &AcssChainState) -> f64 {
        if !cand.value.indicator {
            return f64::NEG_INFINITY;
        }
        cand.value.log_value - current.value.log_value
    }

    fn admits(&self, cand: &AcssChainState) -> bool {
        !self.check_membership || self.state.membership_check_cached(&cand.x, &cand.cache)
    }

    fn accept(&self, cand: AcssChainState) -> AcssChainState {
        // rebuild from scratch so incremental updates never accumulate drift
        let mut fresh = self.start(&cand.x);
        fresh.touched = cand.touched;
        fresh
    }
}

pub fn hub_and_spoke(
    state: &ConditioningState,
    x: &Vector,
    m: usize,
    l: usize,
    s: usize,
    check_membership: bool,
    seed: u64,
) -> Result<CopySet> {
    let kernel = AcssKernel::new(state, s, check_membership)?;
    let (hub, spokes, rate) = hub_and_spoke_states(&kernel, kernel.start(x), m, l, seed)?;
    Ok(CopySet {
        copies: spokes.into_iter().map(|c| c.x).collect(),
        method: SamplingMethod::HubAndSpoke { l, s, hub: hub.x },
        acceptance_rate: Some(rate),
    })
}

/// `min(2000, ⌈2n/(s·Ā)⌉)`.
pub fn chain_length(s: usize, abar: f64, n: usize) -> Result<usize> {
    if !(abar > 0.0 && abar <= 1.0) || s == 0 {
        return Err(invalid(format!("need s >= 1 and average acceptance in (0, 1], got s={s}, abar={abar}")));
    }
    let raw = (2.0 * n as f64 / (s as f64 * abar)).ceil();
    Ok(if raw >= MAX_CHAIN_LENGTH as f64 { MAX_CHAIN_LENGTH } else { raw as usize })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProposalSpec {
    pub s: usize,
    pub abar: f64,
    /// `(s, Ā_s)` for every candidate.
    pub candidates: Vec<(usize, f64)>,
    /// No candidate reached the eligibility threshold.
    pub warning: bool,
    /// Simulated fits that were SSOSPs and entered the averages.
    pub usable_draws: usize,
}

/// Pick the proposal size by simulation at `θ̂`: draw data and noise, refit,
/// and average the one-step acceptance probability of each candidate from the
/// simulated data under its own conditioning state. Proposals rejected by the
/// membership check count as probability zero.
pub fn tune_proposal_size<R: Rng + ?Sized>(
    state: &ConditioningState,
    candidates: &[usize],
    n_draws: usize,
    check_membership: bool,
    rng: &mut R,
) -> Result<ProposalSpec> {
    let n = state.n_obs();
    if candidates.is_empty() || candidates.iter().any(|&s| s == 0 || s > n) {
        return Err(invalid(format!("candidates must be nonempty and within [1, {n}]")));
    }
    let problem = state.problem();
    let mut sums = vec![0.0; candidates.len()];
    let mut usable = 0;
    for _ in 0..n_draws {
        let xs = problem.model.simulate(state.theta_hat(), rng)?;
        let w = draw_perturbation(state.dim(), state.sigma(), rng)?;
        let f = match fit(problem, &xs, &w) {
            Ok(f) if f.is_ssosp() => f,
            _ => continue,
        };
        let sim = ConditioningState::from_fit(problem, &f, state.sigma())?;
        usable += 1;
        for (c, &s) in candidates.iter().enumerate() {
            let kernel = AcssKernel::new(&sim, s, check_membership)?;
            let start = kernel.start(&xs);
            let (cand, log_q) = kernel.propose(&start, rng);
            let a = acceptance_probability(kernel.log_target_ratio(&cand, &start) + log_q);
            if a > 0.0 && kernel.admits(&cand) {
                sums[c] += a;
            }
        }
    }
    if usable == 0 {
        return Err(AcssError::TuningFailed(format!("none of {n_draws} simulated fits was an SSOSP")));
    }
    let table: Vec<(usize, f64)> = candidates.iter().zip(&sums).map(|(&s, &t)| (s, t / usable as f64)).collect();
    let eligible = table.iter().filter(|(_, a)| *a >= MIN_TUNED_ACCEPTANCE);
    let best = eligible.max_by(|p, q| (p.0 as f64 * p.1).total_cmp(&(q.0 as f64 * q.1)).then(q.0.cmp(&p.0)));
    let (choice, warning) = match best {
        Some(&c) => (c, false),
        None => (*table.iter().max_by(|p, q| p.1.total_cmp(&q.1).then(q.0.cmp(&p.0))).expect("nonempty"), true),
    };
    Ok(ProposalSpec { s: choice.0, abar: choice.1, candidates: table, warning, usable_draws: usable })
}
