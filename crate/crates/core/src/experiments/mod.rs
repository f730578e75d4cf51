//! Declarative simulation studies: per-trial data, the three methods, and
//! grid runs with persisted results.

mod config;
mod data;
mod output;

pub use config::{
    ExperimentConfig, ExperimentKind, ExperimentSettings, Grid, Method, DESK_COPIES, DESK_TRIALS, FULL_COPIES,
};
pub use data::{generate, isotonic_theta0, mixture_data, mixture_null_theta, sparse_theta0, TrialData};
pub use output::{
    emit_histogram_data, histogram, histogram_csv, write_outputs, HistogramBin, HistogramFilter, Manifest,
};

use std::time::Instant;

use rayon::prelude::*;

use crate::conditional::ConditioningState;
use crate::constraints::{Builtin, ConstraintSet};
use crate::error::{AcssError, Result};
use crate::estimation::{fit, mixture_problem, EstimationProblem, Mode, SolverKind};
use crate::inference::compute_pvalue;
use crate::model::{draw_perturbation, Model, Vector};
use crate::rng::{derive_seed, seeded};
use crate::samplers::{chain_length, hub_and_spoke, sample_exact_gaussian, tune_proposal_size, MAX_CHAIN_LENGTH};

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial_id: usize,
    pub method: Method,
    pub signal: f64,
    pub sigma: f64,
    pub pvalue: f64,
    pub ssosp_ok: bool,
    pub acceptance_rate: Option<f64>,
    pub proposal_size: Option<usize>,
    pub chain_length: Option<usize>,
    pub t_obs: f64,
    pub warning: Option<String>,
    pub wall_time_ms: f64,
    /// Filled only when copy statistics are requested.
    pub copy_statistics: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub signal: f64,
    pub sigma: f64,
    pub n_trials: usize,
    pub rejections: usize,
    pub rejection_rate: f64,
    /// `sqrt(r(1 − r)/n)`.
    pub std_error: f64,
    pub degenerate: usize,
    pub mean_acceptance_rate: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CellSeed {
    pub signal: f64,
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialResult>,
    pub summary: Vec<SummaryRow>,
    pub cells: Vec<CellSeed>,
}

impl ExperimentReport {
    pub fn row(&self, method: Method, signal: f64, sigma: f64) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.method == method && r.signal == signal && r.sigma == sigma)
    }
}

struct Copies {
    list: Option<Vec<Vector>>,
    ssosp_ok: bool,
    acceptance_rate: Option<f64>,
    proposal_size: Option<usize>,
    chain_length: Option<usize>,
    warning: Option<String>,
}

impl Copies {
    fn degenerate(warning: Option<String>) -> Self {
        Copies { list: None, ssosp_ok: false, acceptance_rate: None, proposal_size: None, chain_length: None, warning }
    }
}

fn regression_problem(config: &ExperimentConfig, method: Method, model: &Model) -> Result<EstimationProblem> {
    let st = &config.settings;
    let d = model.dim();
    let opts = st.solver;
    let z = model.as_gaussian().expect("regression models are Gaussian").z().clone();
    match (config.experiment, method) {
        (ExperimentKind::IsotonicRegression, Method::RegAcss) => EstimationProblem::new(
            Model::gaussian_linear(z, 1.0, 0.0)?,
            Mode::Constrained(ConstraintSet::builtin(&Builtin::Monotone, d)?),
            SolverKind::Pava,
            opts,
        ),
        (ExperimentKind::IsotonicRegression, _) => EstimationProblem::new(
            Model::gaussian_linear(z, 1.0, 0.0)?,
            Mode::Constrained(ConstraintSet::unconstrained(d)),
            SolverKind::ActivesetQp,
            opts,
        ),
        (ExperimentKind::SparseRegression, Method::RegAcss) => EstimationProblem::new(
            Model::gaussian_linear(z, 1.0, st.lambda_ridge)?,
            Mode::L1Penalized { lambda: st.lambda_l1 },
            SolverKind::CoordinateDescent,
            opts,
        ),
        _ => EstimationProblem::new(
            Model::gaussian_linear(z, 1.0, st.lambda_ridge)?,
            Mode::Constrained(ConstraintSet::unconstrained(d)),
            SolverKind::ActivesetQp,
            opts,
        ),
    }
}

/// Steps 1–5 of aCSS for one data set: perturb, fit, certify, then sample.
fn acss_copies(config: &ExperimentConfig, method: Method, data: &TrialData, sigma: f64, seed: u64) -> Result<Copies> {
    let m = config.m_copies;
    let st = &config.settings;
    let mut rng = seeded(seed);
    let problem = match config.experiment {
        ExperimentKind::MixtureGof => mixture_problem(data.x.len(), st.lower_sd, st.solver)?,
        _ => regression_problem(config, method, &data.null_model)?,
    };
    let w = draw_perturbation(problem.dim(), sigma, &mut rng)?;
    let fitted = match fit(&problem, &data.x, &w) {
        Ok(f) if f.is_ssosp() => f,
        Ok(_) => return Ok(Copies::degenerate(None)),
        Err(e) => return Ok(Copies::degenerate(Some(format!("fit failed: {e}")))),
    };
    let state = ConditioningState::from_fit(&problem, &fitted, sigma)?;
    if config.experiment != ExperimentKind::MixtureGof {
        let set = sample_exact_gaussian(&state, m, &mut rng)?;
        return Ok(Copies {
            list: Some(set.copies),
            ssosp_ok: true,
            acceptance_rate: None,
            proposal_size: None,
            chain_length: None,
            warning: None,
        });
    }
    let n = data.x.len();
    let candidates: Vec<usize> = st.proposal_candidates.iter().copied().filter(|&s| s <= n).collect();
    let spec = tune_proposal_size(&state, &candidates, st.tuning_draws, st.check_membership, &mut rng)?;
    let mut warning = spec.warning.then(|| "no proposal size reached the acceptance threshold".to_string());
    let l = if spec.abar > 0.0 {
        chain_length(spec.s, spec.abar, n)?
    } else {
        warning = Some("tuning saw no accepted proposals".into());
        MAX_CHAIN_LENGTH
    };
    let chain_seed = derive_seed(seed, &[0xc4a1]);
    let set = hub_and_spoke(&state, &data.x, m, l, spec.s, st.check_membership, chain_seed)?;
    Ok(Copies {
        list: Some(set.copies),
        ssosp_ok: true,
        acceptance_rate: set.acceptance_rate,
        proposal_size: Some(spec.s),
        chain_length: Some(l),
        warning,
    })
}

fn oracle_copies(config: &ExperimentConfig, data: &TrialData, seed: u64) -> Result<Copies> {
    let mut rng = seeded(seed);
    let list =
        (0..config.m_copies).map(|_| data.null_model.simulate(&data.theta0, &mut rng)).collect::<Result<Vec<_>>>()?;
    Ok(Copies {
        list: Some(list),
        ssosp_ok: true,
        acceptance_rate: None,
        proposal_size: None,
        chain_length: None,
        warning: None,
    })
}

/// Run one method on one simulated data set. The data depend only on
/// `trial_seed`, so every method sees the same data for a given trial.
pub fn run_trial(
    config: &ExperimentConfig,
    method: Method,
    signal: f64,
    sigma: f64,
    trial_seed: u64,
) -> Result<TrialResult> {
    if config.experiment == ExperimentKind::MixtureGof && method == Method::PlainAcss {
        return Err(AcssError::Unsupported("plain_acss has no unconstrained mixture fit".into()));
    }
    let start = Instant::now();
    let mut data_rng = seeded(derive_seed(trial_seed, &[0]));
    let data = generate(
        config.experiment,
        signal,
        config.n(),
        config.settings.d,
        derive_seed(trial_seed, &[0x57a7]),
        &mut data_rng,
    )?;
    let method_seed = derive_seed(trial_seed, &[method.tag()]);
    let copies = match method {
        Method::Oracle => oracle_copies(config, &data, method_seed)?,
        _ => acss_copies(config, method, &data, sigma, method_seed)?,
    };
    let obs = data.statistic.evaluate_detailed(&data.x)?;
    let mut warning = copies.warning.or(obs.warning.map(str::to_string));
    let t_copies: Vec<f64> = match &copies.list {
        Some(list) => list
            .par_iter()
            .map(|c| data.statistic.evaluate_detailed(c))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .map(|v| {
                if warning.is_none() {
                    warning = v.warning.map(str::to_string);
                }
                v.value
            })
            .collect(),
        None => vec![obs.value; config.m_copies],
    };
    let p = compute_pvalue(obs.value, &t_copies)?;
    Ok(TrialResult {
        trial_id: 0,
        method,
        signal,
        sigma,
        pvalue: p.value,
        ssosp_ok: copies.ssosp_ok,
        acceptance_rate: copies.acceptance_rate,
        proposal_size: copies.proposal_size,
        chain_length: copies.chain_length,
        t_obs: obs.value,
        warning,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        copy_statistics: if config.settings.debug_copy_statistics { t_copies } else { Vec::new() },
    })
}

pub fn summarize(trials: &[TrialResult], alpha: f64) -> Vec<SummaryRow> {
    let mut keys: Vec<(Method, f64, f64)> = Vec::new();
    for t in trials {
        if !keys.contains(&(t.method, t.signal, t.sigma)) {
            keys.push((t.method, t.signal, t.sigma));
        }
    }
    keys.into_iter()
        .map(|(method, signal, sigma)| {
            let rows: Vec<&TrialResult> =
                trials.iter().filter(|t| t.method == method && t.signal == signal && t.sigma == sigma).collect();
            let n = rows.len();
            let rejections = rows.iter().filter(|t| t.pvalue <= alpha).count();
            let r = rejections as f64 / n as f64;
            let rates: Vec<f64> = rows.iter().filter_map(|t| t.acceptance_rate).collect();
            SummaryRow {
                method,
                signal,
                sigma,
                n_trials: n,
                rejections,
                rejection_rate: r,
                std_error: (r * (1.0 - r) / n as f64).sqrt(),
                degenerate: rows.iter().filter(|t| !t.ssosp_ok).count(),
                mean_acceptance_rate: (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64),
            }
        })
        .collect()
}

/// Run every grid cell, trial and method; write the result files when the
/// config names an output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let mut cells = Vec::new();
    let mut trials = Vec::new();
    for (si, &signal) in config.signals().iter().enumerate() {
        for (gi, &sigma) in config.sigmas().iter().enumerate() {
            let seed = derive_seed(config.seed, &[si as u64, gi as u64]);
            cells.push(CellSeed { signal, sigma, seed });
            let batch: Vec<Vec<TrialResult>> = (0..config.n_trials)
                .into_par_iter()
                .map(|t| {
                    let trial_seed = derive_seed(seed, &[t as u64]);
                    config
                        .methods
                        .iter()
                        .map(|&m| {
                            run_trial(config, m, signal, sigma, trial_seed).map(|mut r| {
                                r.trial_id = t;
                                r
                            })
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            trials.extend(batch.into_iter().flatten());
        }
    }
    let summary = summarize(&trials, config.alpha);
    let report = ExperimentReport { config: config.clone(), trials, summary, cells };
    if let Some(dir) = &config.output_path {
        write_outputs(&report, dir)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: ExperimentKind, methods: Vec<Method>) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(kind, methods);
        c.n_trials = 4;
        c.m_copies = 9;
        c.grid = Some(Grid { signal: vec![0.0], sigma: vec![3.0] });
        c
    }

    #[test]
    fn pvalues_lie_on_the_grid() {
        let c = small(ExperimentKind::IsotonicRegression, vec![Method::RegAcss, Method::PlainAcss, Method::Oracle]);
        let r = run_experiment(&c).unwrap();
        assert_eq!(r.trials.len(), 12);
        for t in &r.trials {
            let j = t.pvalue * 10.0;
            assert!((j - j.round()).abs() < 1e-12 && t.pvalue > 0.0 && t.pvalue <= 1.0);
        }
        assert_eq!(r.summary.len(), 3);
    }

    #[test]
    fn degenerate_fits_give_pvalue_one() {
        let mut c = small(ExperimentKind::SparseRegression, vec![Method::RegAcss]);
        c.settings.n = Some(10);
        c.settings.d = 8;
        // a zero sweep budget means the coordinate descent never converges
        c.settings.solver.cd.max_sweeps = 0;
        let r = run_experiment(&c).unwrap();
        assert!(r.trials.iter().all(|t| !t.ssosp_ok && t.pvalue == 1.0));
        assert_eq!(r.summary[0].degenerate, 4);
    }

    #[test]
    fn methods_share_the_data() {
        let c = small(ExperimentKind::IsotonicRegression, vec![Method::RegAcss, Method::Oracle]);
        let a = run_trial(&c, Method::RegAcss, 0.0, 3.0, 77).unwrap();
        let b = run_trial(&c, Method::Oracle, 0.0, 3.0, 77).unwrap();
        assert_eq!(a.t_obs, b.t_obs);
        assert!(run_trial(&small(ExperimentKind::MixtureGof, vec![Method::RegAcss]), Method::PlainAcss, 0.0, 8.0, 1)
            .is_err());
    }

    #[test]
    fn mixture_trial_runs_the_chain() {
        let mut c = small(ExperimentKind::MixtureGof, vec![Method::RegAcss]);
        c.m_copies = 5;
        c.settings.tuning_draws = 10;
        let t = run_trial(&c, Method::RegAcss, 0.0, 8.0, 3).unwrap();
        if t.ssosp_ok {
            assert!(t.proposal_size.is_some() && t.chain_length.is_some());
            let rate = t.acceptance_rate.unwrap();
            assert!((0.0..=1.0).contains(&rate));
        }
    }

    #[test]
    fn summary_standard_error() {
        let mk = |p| TrialResult {
            trial_id: 0,
            method: Method::Oracle,
            signal: 0.0,
            sigma: 1.0,
            pvalue: p,
            ssosp_ok: true,
            acceptance_rate: None,
            proposal_size: None,
            chain_length: None,
            t_obs: 0.0,
            warning: None,
            wall_time_ms: 0.0,
            copy_statistics: vec![],
        };
        let s = summarize(&[mk(0.01), mk(0.5), mk(0.05), mk(0.9)], 0.05);
        assert_eq!(s[0].rejections, 2);
        assert_eq!(s[0].rejection_rate, 0.5);
        assert!((s[0].std_error - 0.25).abs() < 1e-15);
    }
}
