//! Estimation of the portfolio prior N(η, σ²) from multi-compound data.
//!
//! Three fitters share one result type:
//!
//! * [`fit_gibbs`]: conjugate Gibbs sampler for θ̂_ij ~ N(θ_i, σ_ij²),
//!   θ_i ~ N(η, σ²), with η ~ N(m, v) and σ² ~ InverseGamma(a, b).
//! * [`fit_gibbs_nested`]: adds study-level effects θ_ij ~ N(θ_i, σ_i²) with
//!   a per-compound between-study variance σ_i².
//! * [`fit_mle`]: marginal maximum likelihood after integrating out θ_i.

mod diagnostics;
mod gibbs;
mod mle;
mod nested;

pub use diagnostics::{diagnostics, DiagnosticsReport, ParamDiagnostic, MIN_ESS, RHAT_THRESHOLD};
pub use gibbs::fit_gibbs;
pub use mle::{fit_mle, marginal_log_likelihood};
pub use nested::{fit_gibbs_nested, VarianceHyper};

use serde::{Deserialize, Serialize};

use crate::conjugate::NormalPrior;
use crate::error::{require_finite, require_positive, Error, Result};

/// Hyperpriors η ~ N(eta_mean, eta_var), σ² ~ InverseGamma(shape, rate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperPriors {
    pub eta_mean: f64,
    pub eta_var: f64,
    pub sigma2_shape: f64,
    pub sigma2_rate: f64,
}

impl Default for HyperPriors {
    fn default() -> Self {
        HyperPriors {
            eta_mean: 0.0,
            eta_var: 1000.0,
            sigma2_shape: 0.001,
            sigma2_rate: 0.001,
        }
    }
}

impl HyperPriors {
    pub fn validate(&self) -> Result<()> {
        require_finite("eta_mean", self.eta_mean)?;
        require_positive("eta_var", self.eta_var)?;
        require_positive("sigma2_shape", self.sigma2_shape)?;
        require_positive("sigma2_rate", self.sigma2_rate)
    }
}

/// Chain layout for the Gibbs fitters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GibbsSettings {
    pub chains: usize,
    pub iters: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for GibbsSettings {
    fn default() -> Self {
        GibbsSettings {
            chains: 4,
            iters: 5000,
            burn_in: 2500,
            seed: 42,
        }
    }
}

impl GibbsSettings {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::Validation("chains must be >= 1".into()));
        }
        if self.iters <= self.burn_in {
            return Err(Error::Validation(format!(
                "iters ({}) must exceed burn_in ({})",
                self.iters, self.burn_in
            )));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        self.iters - self.burn_in
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Gibbs,
    Mle,
    GibbsNested,
}

impl FitMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            FitMethod::Gibbs => "gibbs",
            FitMethod::Mle => "mle",
            FitMethod::GibbsNested => "gibbs_nested",
        }
    }

    pub fn is_sampler(&self) -> bool {
        !matches!(self, FitMethod::Mle)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitWarning {
    /// Fewer than two compounds: σ² is barely identified.
    SmallPortfolio { compounds: usize },
    /// Compounds with a single study, whose σ_i² is weakly identified.
    SingleStudyCompounds { compound_ids: Vec<String> },
    /// MLE of σ² sits on the zero boundary.
    BoundaryVariance,
}

impl std::fmt::Display for FitWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FitWarning::SmallPortfolio { compounds } => {
                write!(f, "small_portfolio: only {compounds} compound(s)")
            }
            FitWarning::SingleStudyCompounds { compound_ids } => write!(
                f,
                "weak_identification: {} compound(s) with one study; their between-study variance follows its prior",
                compound_ids.len()
            ),
            FitWarning::BoundaryVariance => write!(f, "boundary: sigma2 estimate clipped at 0"),
        }
    }
}

/// Retained posterior draws, one row-major matrix per chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Draws {
    names: Vec<String>,
    chains: Vec<Vec<f64>>,
}

impl Draws {
    /// `chains[c]` holds `iterations × names.len()` values, row-major.
    pub fn new(names: Vec<String>, chains: Vec<Vec<f64>>) -> Result<Self> {
        let k = names.len();
        if k == 0 {
            return Err(Error::Validation(
                "draws need at least one parameter".into(),
            ));
        }
        let len = chains.first().map(Vec::len).unwrap_or(0);
        if chains.iter().any(|c| c.len() != len || c.len() % k != 0) {
            return Err(Error::Validation(
                "every chain must hold the same whole number of draws".into(),
            ));
        }
        Ok(Draws { names, chains })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn n_iters(&self) -> usize {
        self.chains
            .first()
            .map_or(0, |c| c.len() / self.names.len())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Draws of parameter `p` in chain `c`.
    pub fn chain_param(&self, c: usize, p: usize) -> Vec<f64> {
        let k = self.names.len();
        self.chains[c].iter().skip(p).step_by(k).copied().collect()
    }

    /// All chains of parameter `p`, concatenated in chain order.
    pub fn pooled(&self, p: usize) -> Vec<f64> {
        (0..self.n_chains())
            .flat_map(|c| self.chain_param(c, p))
            .collect()
    }

    pub fn summary(&self, p: usize) -> ParamSummary {
        ParamSummary::from_draws(&self.pooled(p))
    }

    pub fn raw_chain(&self, c: usize) -> &[f64] {
        &self.chains[c]
    }
}

/// Mean, SD and equal-tailed 90% interval of a set of draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q95: f64,
}

impl ParamSummary {
    pub fn from_draws(x: &[f64]) -> Self {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = if x.len() > 1 {
            x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let mut sorted = x.to_vec();
        sorted.sort_by(f64::total_cmp);
        ParamSummary {
            mean,
            sd: var.sqrt(),
            q05: quantile_sorted(&sorted, 0.05),
            q95: quantile_sorted(&sorted, 0.95),
        }
    }
}

/// Linear-interpolation sample quantile (type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub eta: f64,
    pub sigma2: f64,
    pub se_eta: Option<f64>,
    pub se_sigma2: Option<f64>,
}

/// Output of any prior fitter.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub method: FitMethod,
    /// Retained draws; `None` for the MLE.
    pub draws: Option<Draws>,
    pub point: PointEstimate,
    pub diagnostics: Option<DiagnosticsReport>,
    pub warnings: Vec<FitWarning>,
    pub seed: u64,
    pub chains: usize,
    /// Marginal log-likelihood at the optimum (MLE only).
    pub log_likelihood: Option<f64>,
}

impl FitResult {
    /// Wraps sampler draws: point estimate is the posterior mean of `eta`
    /// and `sigma2`, diagnostics are computed immediately.
    pub fn from_draws(method: FitMethod, draws: Draws, seed: u64) -> Result<Self> {
        let ie = draws
            .index_of("eta")
            .ok_or_else(|| Error::Validation("draws lack an 'eta' column".into()))?;
        let is = draws
            .index_of("sigma2")
            .ok_or_else(|| Error::Validation("draws lack a 'sigma2' column".into()))?;
        if draws.n_iters() == 0 {
            return Err(Error::Validation("no retained draws".into()));
        }
        let eta = draws.summary(ie);
        let sigma2 = draws.summary(is);
        let diag = diagnostics(&draws);
        Ok(FitResult {
            method,
            point: PointEstimate {
                eta: eta.mean,
                sigma2: sigma2.mean,
                se_eta: Some(eta.sd),
                se_sigma2: Some(sigma2.sd),
            },
            chains: draws.n_chains(),
            draws: Some(draws),
            diagnostics: Some(diag),
            warnings: Vec::new(),
            seed,
            log_likelihood: None,
        })
    }

    pub fn summary(&self, name: &str) -> Option<ParamSummary> {
        let d = self.draws.as_ref()?;
        d.index_of(name).map(|p| d.summary(p))
    }

    pub fn has_warning(&self, pred: impl Fn(&FitWarning) -> bool) -> bool {
        self.warnings.iter().any(pred)
    }
}

/// How η uncertainty enters the prior handed to the adjustment step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    /// N(E[η], E[σ²]).
    Plugin,
    /// N(E[η], E[σ²] + Var[η]).
    Predictive,
}

/// Turns a fit into the prior used for adjustment. For the MLE, the point
/// estimate plays the role of the posterior mean and the squared standard
/// error of η̂ plays the role of Var[η].
pub fn prior_from_fit(result: &FitResult, mode: PriorMode) -> Result<NormalPrior> {
    let (eta, sigma2, eta_var) = match &result.draws {
        Some(d) => {
            let ie = d
                .index_of("eta")
                .ok_or_else(|| Error::Validation("fit lacks eta draws".into()))?;
            let is = d
                .index_of("sigma2")
                .ok_or_else(|| Error::Validation("fit lacks sigma2 draws".into()))?;
            let e = d.summary(ie);
            let s = d.summary(is);
            (e.mean, s.mean, e.sd * e.sd)
        }
        None => (
            result.point.eta,
            result.point.sigma2,
            result.point.se_eta.map_or(0.0, |s| s * s),
        ),
    };
    let var = match mode {
        PriorMode::Plugin => sigma2,
        PriorMode::Predictive => sigma2 + eta_var,
    };
    if !(var > 0.0) {
        return Err(Error::Domain(format!(
            "fitted between-compound variance is {var}; a normal prior needs a positive variance \
             (use predictive mode or a Gibbs fit)"
        )));
    }
    NormalPrior::new(eta, var)
}
