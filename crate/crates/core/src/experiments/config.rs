use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, AcssError, Result};
use crate::estimation::SolverOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    MixtureGof,
    IsotonicRegression,
    SparseRegression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    RegAcss,
    PlainAcss,
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::RegAcss => "reg_acss",
            Method::PlainAcss => "plain_acss",
            Method::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Method::RegAcss, Method::PlainAcss, Method::Oracle].into_iter().find(|m| m.name() == s)
    }

    pub(crate) fn tag(self) -> u64 {
        match self {
            Method::RegAcss => 1,
            Method::PlainAcss => 2,
            Method::Oracle => 3,
        }
    }
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::MixtureGof => "mixture_gof",
            ExperimentKind::IsotonicRegression => "isotonic_regression",
            ExperimentKind::SparseRegression => "sparse_regression",
        }
    }

    pub fn default_n(self) -> usize {
        match self {
            ExperimentKind::MixtureGof => 200,
            ExperimentKind::IsotonicRegression => 100,
            ExperimentKind::SparseRegression => 50,
        }
    }

    /// Trials per grid cell with `--paper-scale`.
    pub fn full_trials(self) -> usize {
        match self {
            ExperimentKind::MixtureGof => 500,
            _ => 5000,
        }
    }

    pub fn default_signals(self) -> Vec<f64> {
        (0..=10).map(|i| i as f64 * 0.05).collect()
    }

    pub fn default_sigmas(self) -> Vec<f64> {
        match self {
            ExperimentKind::MixtureGof => vec![8.0],
            _ => (1..=10).map(f64::from).collect(),
        }
    }
}

pub const DESK_TRIALS: usize = 500;
pub const DESK_COPIES: usize = 100;
pub const FULL_COPIES: usize = 300;

/// Signal levels (π0 for the mixture, β0 for the regressions) crossed with σ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub signal: Vec<f64>,
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    /// Sample size; the experiment's standard size when absent.
    pub n: Option<usize>,
    /// Covariate dimension for the sparse regression.
    pub d: usize,
    pub lower_sd: f64,
    pub lambda_ridge: f64,
    pub lambda_l1: f64,
    pub proposal_candidates: Vec<usize>,
    pub tuning_draws: usize,
    pub check_membership: bool,
    /// Also write every copy's statistic to `copy_statistics.csv`.
    pub debug_copy_statistics: bool,
    pub solver: SolverOptions,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            n: None,
            d: 100,
            lower_sd: 0.098,
            lambda_ridge: 0.01,
            lambda_l1: 2.0,
            proposal_candidates: vec![1, 2, 5, 10, 20],
            tuning_draws: 100,
            check_membership: true,
            debug_copy_statistics: false,
            solver: SolverOptions::default(),
        }
    }
}

fn default_trials() -> usize {
    DESK_TRIALS
}
fn default_copies() -> usize {
    DESK_COPIES
}
fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default = "default_copies")]
    pub m_copies: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub settings: ExperimentSettings,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind, methods: Vec<Method>) -> Self {
        ExperimentConfig {
            experiment,
            grid: None,
            n_trials: DESK_TRIALS,
            m_copies: DESK_COPIES,
            alpha: default_alpha(),
            methods,
            seed: 0,
            output_path: None,
            settings: ExperimentSettings::default(),
        }
    }

    /// Parse JSON, or TOML when `toml` is set.
    pub fn parse(text: &str, toml: bool) -> Result<Self> {
        if toml {
            toml::from_str(text).map_err(|e| AcssError::Parse {
                line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
                msg: e.message().to_string(),
            })
        } else {
            serde_json::from_str(text).map_err(|e| AcssError::Parse { line: e.line(), msg: e.to_string() })
        }
    }

    /// Format chosen by extension: `.toml` is TOML, anything else JSON.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn with_full_scale(mut self) -> Self {
        self.n_trials = self.experiment.full_trials();
        self.m_copies = FULL_COPIES;
        self
    }

    pub fn n(&self) -> usize {
        self.settings.n.unwrap_or(self.experiment.default_n())
    }

    pub fn signals(&self) -> Vec<f64> {
        self.grid.as_ref().map_or_else(|| self.experiment.default_signals(), |g| g.signal.clone())
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.grid.as_ref().map_or_else(|| self.experiment.default_sigmas(), |g| g.sigma.clone())
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(invalid("method list is empty"));
        }
        if self.n_trials < 1 {
            return Err(invalid("n_trials must be at least 1"));
        }
        if self.m_copies < 1 {
            return Err(invalid("m_copies must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        let (signals, sigmas) = (self.signals(), self.sigmas());
        if signals.is_empty() || sigmas.is_empty() {
            return Err(invalid("grids must be nonempty"));
        }
        if let Some(s) = sigmas.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(invalid(format!("sigma must be positive and finite, got {s}")));
        }
        if let Some(s) = signals.iter().find(|s| !s.is_finite()) {
            return Err(invalid(format!("signal level {s} is not finite")));
        }
        let n = self.n();
        let st = &self.settings;
        match self.experiment {
            ExperimentKind::MixtureGof => {
                if self.methods.contains(&Method::PlainAcss) {
                    return Err(AcssError::Unsupported("plain_acss has no unconstrained mixture fit".into()));
                }
                if let Some(p) = signals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                    return Err(invalid(format!("mixture weight {p} outside [0, 1]")));
                }
                if n < 3 {
                    return Err(invalid("mixture experiment needs n >= 3"));
                }
                if !(st.lower_sd > 0.0) {
                    return Err(invalid("lower_sd must be positive"));
                }
                if st.proposal_candidates.is_empty() || st.proposal_candidates.contains(&0) {
                    return Err(invalid("proposal candidates must be positive"));
                }
                if !st.proposal_candidates.iter().any(|&s| s <= n) {
                    return Err(invalid("no proposal candidate fits the sample size"));
                }
                if st.tuning_draws < 1 {
                    return Err(invalid("tuning_draws must be at least 1"));
                }
            }
            ExperimentKind::IsotonicRegression => {
                if n < 2 {
                    return Err(invalid("isotonic experiment needs n >= 2"));
                }
            }
            ExperimentKind::SparseRegression => {
                if n < 2 || st.d < 5 {
                    return Err(invalid("sparse experiment needs n >= 2 and d >= 5"));
                }
                if !(st.lambda_ridge > 0.0 && st.lambda_l1 > 0.0) {
                    return Err(invalid("sparse experiment needs positive lambda_ridge and lambda_l1"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_and_toml_agree() {
        let json = r#"{"experiment":"isotonic_regression","grid":{"signal":[0.0],"sigma":[1.0,7.0]},
            "n_trials":20,"m_copies":50,"alpha":0.1,"methods":["reg_acss","plain_acss"],"seed":9}"#;
        let toml = "experiment = \"isotonic_regression\"\nn_trials = 20\nm_copies = 50\nalpha = 0.1\n\
            methods = [\"reg_acss\", \"plain_acss\"]\nseed = 9\n[grid]\nsignal = [0.0]\nsigma = [1.0, 7.0]\n";
        let a = ExperimentConfig::parse(json, false).unwrap();
        let b = ExperimentConfig::parse(toml, true).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        assert_eq!(ExperimentConfig::parse(&a.to_json(), false).unwrap(), a);
    }

    #[test]
    fn defaults_and_scale() {
        let c = ExperimentConfig::parse(r#"{"experiment":"mixture_gof","methods":["reg_acss"]}"#, false).unwrap();
        assert_eq!((c.n_trials, c.m_copies, c.alpha), (500, 100, 0.05));
        assert_eq!(c.signals().len(), 11);
        assert_eq!(c.sigmas(), vec![8.0]);
        let p = c.with_full_scale();
        assert_eq!((p.n_trials, p.m_copies), (500, 300));
        let s = ExperimentConfig::new(ExperimentKind::SparseRegression, vec![Method::Oracle]).with_full_scale();
        assert_eq!(s.n_trials, 5000);
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut c = ExperimentConfig::new(ExperimentKind::IsotonicRegression, vec![]);
        assert!(c.validate().is_err());
        c.methods = vec![Method::RegAcss];
        c.alpha = 1.0;
        assert!(c.validate().is_err());
        c.alpha = 0.1;
        c.grid = Some(Grid { signal: vec![], sigma: vec![1.0] });
        assert!(c.validate().is_err());
        let m = ExperimentConfig::new(ExperimentKind::MixtureGof, vec![Method::PlainAcss]);
        assert!(matches!(m.validate(), Err(AcssError::Unsupported(_))));
        assert!(matches!(ExperimentConfig::parse("{\"experiment\":", false), Err(AcssError::Parse { .. })));
        assert!(ExperimentConfig::parse(r#"{"experiment":"x","methods":[]}"#, false).is_err());
    }
}
