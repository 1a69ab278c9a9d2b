//! Monte Carlo engine for the generative model
//! θ ~ N(η, σ²), small | θ ~ N(θ, σ_s²), large | θ ~ N(θ, σ_l²).
//!
//! Draws are produced in fixed-size shards. Shard `k` uses ChaCha stream `k`
//! under the configured seed and shard partial sums are reduced in shard
//! order, so every summary is bit-identical regardless of how many worker
//! threads run.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conjugate::{self, NormalPrior};
use crate::error::{require_finite, require_positive, Error, Result};
use crate::portfolio::{CompoundRecord, Portfolio};
use crate::prior_fit::{self, quantile_sorted, GibbsSettings, HyperPriors};
use crate::rng;

/// Draws per shard.
pub const SHARD_SIZE: u64 = 1 << 16;
/// Largest draw count whose running count is exact in an f64.
pub const MAX_DRAWS: u64 = 1 << 53;
/// Minimum number of draws inside a conditioning window.
pub const MIN_WINDOW_COUNT: u64 = 1000;
/// Minimum selected fraction accepted by [`selection_experiment`].
pub const MIN_SELECTED_FRACTION: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub prior: NormalPrior,
    pub sigma_s: f64,
    pub sigma_l: f64,
    pub n_draws: u64,
    /// Selection threshold: a draw is selected when `small < delta`.
    pub delta: Option<f64>,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        require_positive("sigma_s", self.sigma_s)?;
        require_positive("sigma_l", self.sigma_l)?;
        if self.n_draws == 0 {
            return Err(Error::Validation("n_draws must be >= 1".into()));
        }
        if self.n_draws > MAX_DRAWS {
            return Err(Error::Validation(format!(
                "n_draws {} exceeds accumulator precision limit {MAX_DRAWS}",
                self.n_draws
            )));
        }
        if let Some(d) = self.delta {
            if d.is_nan() {
                return Err(Error::Domain("delta must not be NaN".into()));
            }
        }
        Ok(())
    }
}

/// One simulated compound: true effect and both study estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub theta: f64,
    pub s_hat: f64,
    pub l_hat: f64,
}

/// Running sums of a shifted quantity.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Moment {
    n: u64,
    sum: f64,
    sum_sq: f64,
}

impl Moment {
    #[inline]
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn merge(&mut self, o: &Moment) {
        self.n += o.n;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
    }

    fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    fn var(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        let n = self.n as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    fn se(&self) -> f64 {
        (self.var() / self.n as f64).sqrt()
    }

    fn stat(&self, shift: f64) -> MeanSe {
        MeanSe {
            mean: shift + self.mean(),
            se: self.se(),
        }
    }
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    /// |mean − target| ≤ k·se.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.se
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct SelectedAcc {
    s: Moment,
    theta: Moment,
    l: Moment,
    adjusted: Moment,
    adj_minus_theta: Moment,
    theta_minus_l: Moment,
    s_minus_theta: Moment,
}

impl SelectedAcc {
    fn merge(&mut self, o: &SelectedAcc) {
        self.s.merge(&o.s);
        self.theta.merge(&o.theta);
        self.l.merge(&o.l);
        self.adjusted.merge(&o.adjusted);
        self.adj_minus_theta.merge(&o.adj_minus_theta);
        self.theta_minus_l.merge(&o.theta_minus_l);
        self.s_minus_theta.merge(&o.s_minus_theta);
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct ShardAcc {
    theta: Moment,
    s: Moment,
    l: Moment,
    adjusted: Moment,
    var_gap: Moment,
    cross_sl: f64,
    selected: SelectedAcc,
}

impl ShardAcc {
    fn merge(&mut self, o: &ShardAcc) {
        self.theta.merge(&o.theta);
        self.s.merge(&o.s);
        self.l.merge(&o.l);
        self.adjusted.merge(&o.adjusted);
        self.var_gap.merge(&o.var_gap);
        self.cross_sl += o.cross_sl;
        self.selected.merge(&o.selected);
    }
}

/// Statistics over the selected draws (`small < delta`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionStats {
    pub delta: f64,
    pub count: u64,
    pub fraction: f64,
    pub s_hat: MeanSe,
    pub theta: MeanSe,
    pub l_hat: MeanSe,
    pub adjusted: MeanSe,
    /// Paired per-draw differences.
    pub adjusted_minus_theta: MeanSe,
    pub theta_minus_l_hat: MeanSe,
    pub s_hat_minus_theta: MeanSe,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub n_draws: u64,
    pub theta: MeanSe,
    pub s_hat: MeanSe,
    pub l_hat: MeanSe,
    pub var_theta: f64,
    pub var_s_hat: f64,
    pub var_l_hat: f64,
    pub corr_s_l: f64,
    /// Estimate of Var(small) − Var(θ) from per-draw centred squares; its
    /// expectation is σ_s².
    pub var_gap: MeanSe,
    /// Adjusted estimate η' + w'(small − η') under the adjustment prior.
    pub adjusted: MeanSe,
    pub selection: Option<SelectionStats>,
}

#[inline]
fn draw_triple<R: Rng>(
    rng: &mut R,
    prior: &NormalPrior,
    sd: f64,
    sigma_s: f64,
    sigma_l: f64,
) -> Triple {
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    let z3: f64 = rng.sample(StandardNormal);
    let theta = prior.eta + sd * z1;
    Triple {
        theta,
        s_hat: theta + sigma_s * z2,
        l_hat: theta + sigma_l * z3,
    }
}

fn shard_count(n: u64) -> u64 {
    n.div_ceil(SHARD_SIZE)
}

fn shard_len(n: u64, k: u64) -> u64 {
    (n - k * SHARD_SIZE).min(SHARD_SIZE)
}

/// Runs `per_shard` over all shards in parallel and folds the results in
/// shard order.
fn sharded<A, F, M>(config: &SimConfig, per_shard: F, mut merge: M) -> A
where
    A: Send + Default,
    F: Fn(&mut rng::StreamRng, u64) -> A + Sync,
    M: FnMut(&mut A, A),
{
    let parts: Vec<A> = (0..shard_count(config.n_draws))
        .into_par_iter()
        .map(|k| {
            let mut r = rng::stream(config.seed, k);
            per_shard(&mut r, shard_len(config.n_draws, k))
        })
        .collect();
    let mut total = A::default();
    for p in parts {
        merge(&mut total, p);
    }
    total
}

/// Calls `f` on every draw, in draw order. Produces exactly the draws that
/// [`simulate`] summarizes.
pub fn for_each_triple(config: &SimConfig, mut f: impl FnMut(Triple)) -> Result<()> {
    config.validate()?;
    let sd = config.prior.sd();
    for k in 0..shard_count(config.n_draws) {
        let mut r = rng::stream(config.seed, k);
        for _ in 0..shard_len(config.n_draws, k) {
            f(draw_triple(
                &mut r,
                &config.prior,
                sd,
                config.sigma_s,
                config.sigma_l,
            ));
        }
    }
    Ok(())
}

/// Writes draws as CSV with header `theta,s_hat,l_hat`.
pub fn write_triples<W: Write>(config: &SimConfig, out: W) -> Result<()> {
    let mut w = std::io::BufWriter::new(out);
    writeln!(w, "theta,s_hat,l_hat")?;
    let mut io_err = None;
    for_each_triple(config, |t| {
        if io_err.is_none() {
            if let Err(e) = writeln!(w, "{},{},{}", t.theta, t.s_hat, t.l_hat) {
                io_err = Some(e);
            }
        }
    })?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    w.flush()?;
    Ok(())
}

/// Summary of `config.n_draws` draws; adjusted estimates use the true prior.
pub fn simulate(config: &SimConfig) -> Result<SimSummary> {
    simulate_with_adjustment(config, &config.prior)
}

/// As [`simulate`], with adjusted estimates computed under `adjust_prior`.
pub fn simulate_with_adjustment(
    config: &SimConfig,
    adjust_prior: &NormalPrior,
) -> Result<SimSummary> {
    config.validate()?;
    adjust_prior.validate()?;
    let eta = config.prior.eta;
    let sd = config.prior.sd();
    let w = adjust_prior.shrink_weight(config.sigma_s);
    let (sigma_s, sigma_l, delta) = (config.sigma_s, config.sigma_l, config.delta);

    let acc = sharded(
        config,
        |r, len| {
            let mut a = ShardAcc::default();
            for _ in 0..len {
                let t = draw_triple(r, &config.prior, sd, sigma_s, sigma_l);
                let (dt, ds, dl) = (t.theta - eta, t.s_hat - eta, t.l_hat - eta);
                let adj = adjust_prior.eta + w * (t.s_hat - adjust_prior.eta);
                a.theta.push(dt);
                a.s.push(ds);
                a.l.push(dl);
                a.adjusted.push(adj - eta);
                a.var_gap.push(ds * ds - dt * dt);
                a.cross_sl += ds * dl;
                if delta.is_some_and(|d| t.s_hat < d) {
                    let sel = &mut a.selected;
                    sel.s.push(ds);
                    sel.theta.push(dt);
                    sel.l.push(dl);
                    sel.adjusted.push(adj - eta);
                    sel.adj_minus_theta.push(adj - t.theta);
                    sel.theta_minus_l.push(t.theta - t.l_hat);
                    sel.s_minus_theta.push(t.s_hat - t.theta);
                }
            }
            a
        },
        |total, part| total.merge(&part),
    );

    let n = acc.theta.n as f64;
    let cov_sl = (acc.cross_sl - acc.s.sum * acc.l.sum / n) / (n - 1.0);
    let selection = delta.map(|d| {
        let s = &acc.selected;
        SelectionStats {
            delta: d,
            count: s.s.n,
            fraction: s.s.n as f64 / n,
            s_hat: s.s.stat(eta),
            theta: s.theta.stat(eta),
            l_hat: s.l.stat(eta),
            adjusted: s.adjusted.stat(eta),
            adjusted_minus_theta: s.adj_minus_theta.stat(0.0),
            theta_minus_l_hat: s.theta_minus_l.stat(0.0),
            s_hat_minus_theta: s.s_minus_theta.stat(0.0),
        }
    });
    Ok(SimSummary {
        n_draws: config.n_draws,
        theta: acc.theta.stat(eta),
        s_hat: acc.s.stat(eta),
        l_hat: acc.l.stat(eta),
        var_theta: acc.theta.var(),
        var_s_hat: acc.s.var(),
        var_l_hat: acc.l.var(),
        corr_s_l: cov_sl / (acc.s.var() * acc.l.var()).sqrt(),
        var_gap: acc.var_gap.stat(0.0),
        adjusted: acc.adjusted.stat(eta),
        selection,
    })
}

/// Empirical law of `large` among draws whose `small` lies within
/// `window` of `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalOracle {
    pub cond_mean: MeanSe,
    pub cond_sd: MeanSe,
    /// Empirical Pr(large < delta) in the window; `None` without a delta.
    pub pos: Option<MeanSe>,
    pub n_in_window: u64,
}

#[derive(Default)]
struct WindowAcc {
    l: Moment,
    below: u64,
}

/// Brute-force conditional distribution of the large-study estimate.
///
/// Fails before simulating if the expected window count (from the closed
/// form marginal of `small`) is below [`MIN_WINDOW_COUNT`], and after
/// simulating if the realized count is.
pub fn mc_conditional_oracle(config: &SimConfig, s: f64, window: f64) -> Result<ConditionalOracle> {
    config.validate()?;
    require_finite("s", s)?;
    require_positive("window", window)?;
    let joint = conjugate::joint_marginal(&config.prior, config.sigma_s, config.sigma_l)?;
    let tau = joint.var_s.sqrt();
    let mass = crate::normal::cdf((s + window - joint.mean_s) / tau)
        - crate::normal::cdf((s - window - joint.mean_s) / tau);
    let expected = mass * config.n_draws as f64;
    if !(expected >= MIN_WINDOW_COUNT as f64) {
        return Err(Error::InsufficientSample {
            s,
            window,
            found: expected as u64,
            required: MIN_WINDOW_COUNT,
        });
    }

    let sd = config.prior.sd();
    let delta = config.delta;
    let acc = sharded(
        config,
        |r, len| {
            let mut a = WindowAcc::default();
            for _ in 0..len {
                let t = draw_triple(r, &config.prior, sd, config.sigma_s, config.sigma_l);
                if (t.s_hat - s).abs() <= window {
                    a.l.push(t.l_hat - s);
                    if delta.is_some_and(|d| t.l_hat < d) {
                        a.below += 1;
                    }
                }
            }
            a
        },
        |total, part| {
            total.l.merge(&part.l);
            total.below += part.below;
        },
    );

    let n = acc.l.n;
    if n < MIN_WINDOW_COUNT {
        return Err(Error::InsufficientSample {
            s,
            window,
            found: n,
            required: MIN_WINDOW_COUNT,
        });
    }
    let sd_hat = acc.l.var().sqrt();
    let pos = delta.map(|_| {
        let p = acc.below as f64 / n as f64;
        MeanSe {
            mean: p,
            se: (p * (1.0 - p) / n as f64).sqrt(),
        }
    });
    Ok(ConditionalOracle {
        cond_mean: acc.l.stat(s),
        // normal-theory standard error of a sample SD
        cond_sd: MeanSe {
            mean: sd_hat,
            se: sd_hat / (2.0 * (n as f64 - 1.0)).sqrt(),
        },
        pos,
        n_in_window: n,
    })
}

/// Outcome of a selection experiment. Means are among selected draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub selection: SelectionStats,
    /// Mean adjusted estimate over all draws; targets η when the adjustment
    /// prior is the true prior.
    pub unconditional_adjusted: MeanSe,
    pub eta: f64,
    /// Closed-form E(small | small < δ) under the true prior.
    pub analytic_selected_mean: f64,
    /// Closed-form E(small − θ | small < δ).
    pub analytic_truncation_bias: f64,
    /// |mean(adjusted − θ)| ≤ 3 SE among selected draws.
    pub adjusted_matches_theta: bool,
    /// |mean(θ − large)| ≤ 3 SE among selected draws.
    pub theta_matches_large: bool,
    /// Naive selected mean differs from the selected θ mean by more than
    /// 3 SE. `None` when the analytic truncation bias is within 5 SE, i.e.
    /// too small to resolve at this sample size.
    pub naive_biased: Option<bool>,
}

/// Simulates stage-wise selection at `config.delta` and contrasts the naive
/// early estimate, the adjusted estimate, the true effect and the large
/// study among advanced compounds.
pub fn selection_experiment(
    config: &SimConfig,
    adjust_prior: &NormalPrior,
) -> Result<SelectionReport> {
    let delta = config
        .delta
        .ok_or_else(|| Error::Validation("selection experiment needs a delta".into()))?;
    let summary = simulate_with_adjustment(config, adjust_prior)?;
    let sel = summary.selection.expect("delta is set");
    if sel.count < 2 || sel.fraction < MIN_SELECTED_FRACTION {
        return Err(Error::DegenerateSelection {
            delta,
            probability: sel.fraction,
            floor: MIN_SELECTED_FRACTION,
        });
    }
    let prior = &config.prior;
    let (analytic_selected_mean, analytic_truncation_bias) = if delta == f64::INFINITY {
        (prior.eta, 0.0)
    } else {
        let m = conjugate::truncated_selected_mean(prior, config.sigma_s, delta)?;
        let tau2 = config.sigma_s * config.sigma_s + prior.sigma2;
        (m, config.sigma_s * config.sigma_s / tau2 * (m - prior.eta))
    };
    let diff = &sel.s_hat_minus_theta;
    let naive_biased = if analytic_truncation_bias.abs() > 5.0 * diff.se {
        Some(!diff.within(0.0, 3.0))
    } else {
        None
    };
    Ok(SelectionReport {
        selection: sel,
        unconditional_adjusted: summary.adjusted,
        eta: prior.eta,
        analytic_selected_mean,
        analytic_truncation_bias,
        adjusted_matches_theta: sel.adjusted_minus_theta.within(0.0, 3.0),
        theta_matches_large: sel.theta_minus_l_hat.within(0.0, 3.0),
        naive_biased,
    })
}

/// Synthetic portfolio generator with known truth. `sigma2` may be 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortfolioGenerator {
    pub eta: f64,
    pub sigma2: f64,
    pub n_compounds: usize,
    pub studies_per_compound: usize,
    pub std_error: f64,
}

impl PortfolioGenerator {
    pub fn validate(&self) -> Result<()> {
        require_finite("eta", self.eta)?;
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::Domain(format!(
                "generator sigma2 must be finite and >= 0, got {}",
                self.sigma2
            )));
        }
        require_positive("std_error", self.std_error)?;
        if self.n_compounds == 0 || self.studies_per_compound == 0 {
            return Err(Error::Validation(
                "generator needs at least one compound and one study each".into(),
            ));
        }
        Ok(())
    }

    /// One portfolio: θ_i ~ N(η, σ²), θ̂_ij ~ N(θ_i, se²).
    pub fn generate<R: Rng>(&self, rng: &mut R) -> Result<Portfolio> {
        self.validate()?;
        let sd = self.sigma2.sqrt();
        let compounds = (0..self.n_compounds)
            .map(|i| {
                let z: f64 = rng.sample(StandardNormal);
                let theta = self.eta + sd * z;
                let studies = (0..self.studies_per_compound)
                    .map(|j| {
                        let e: f64 = rng.sample(StandardNormal);
                        conjugate::StudyEstimate::new(theta + self.std_error * e, self.std_error)
                            .map(|s| s.with_label(format!("s{}", j + 1)))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(CompoundRecord::new(format!("c{}", i + 1), studies))
            })
            .collect::<Result<Vec<_>>>()?;
        Portfolio::new(compounds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub n_portfolios: usize,
    pub generator: PortfolioGenerator,
    pub hyper: HyperPriors,
    /// Chain layout; `seed` is the master seed of the whole experiment.
    pub settings: GibbsSettings,
    /// Credible level of the equal-tailed intervals, e.g. 0.9.
    pub level: f64,
}

/// Smallest accepted number of replicate portfolios.
pub const MIN_CALIBRATION_PORTFOLIOS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub n_portfolios: usize,
    pub n_fitted: usize,
    pub level: f64,
    pub eta_coverage: f64,
    pub sigma2_coverage: f64,
    /// Binomial standard error of a coverage rate at the nominal level.
    pub coverage_se: f64,
    /// Fit failures (replicate index and message); not fatal.
    pub failures: Vec<(usize, String)>,
    pub notes: Vec<String>,
}

/// Repeatedly simulates portfolios with known (η, σ²), fits each with the
/// Gibbs sampler and reports how often the equal-tailed credible intervals
/// contain the truth.
pub fn calibration_experiment(cfg: &CalibrationConfig) -> Result<CoverageReport> {
    if cfg.n_portfolios < MIN_CALIBRATION_PORTFOLIOS {
        return Err(Error::Validation(format!(
            "calibration needs at least {MIN_CALIBRATION_PORTFOLIOS} portfolios, got {}",
            cfg.n_portfolios
        )));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::Validation(format!(
            "credible level must lie in (0, 1), got {}",
            cfg.level
        )));
    }
    cfg.generator.validate()?;
    cfg.hyper.validate()?;
    cfg.settings.validate()?;

    let data_seed = rng::derive_seed(cfg.settings.seed, 0);
    let lo_q = (1.0 - cfg.level) / 2.0;
    let hi_q = 1.0 - lo_q;
    let covers = |draws: Vec<f64>, truth: f64| {
        let mut d = draws;
        d.sort_by(f64::total_cmp);
        quantile_sorted(&d, lo_q) <= truth && truth <= quantile_sorted(&d, hi_q)
    };

    let outcomes: Vec<Result<(bool, bool)>> = (0..cfg.n_portfolios)
        .into_par_iter()
        .map(|r| {
            let mut data_rng = rng::stream(data_seed, r as u64);
            let portfolio = cfg.generator.generate(&mut data_rng)?;
            let settings = GibbsSettings {
                seed: rng::derive_seed(cfg.settings.seed, r as u64 + 1),
                ..cfg.settings
            };
            let fit = prior_fit::fit_gibbs(&portfolio, &cfg.hyper, &settings)?;
            let draws = fit.draws.as_ref().expect("gibbs keeps draws");
            Ok((
                covers(draws.pooled(0), cfg.generator.eta),
                covers(draws.pooled(1), cfg.generator.sigma2),
            ))
        })
        .collect();

    let mut failures = Vec::new();
    let (mut eta_hits, mut s2_hits, mut fitted) = (0usize, 0usize, 0usize);
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok((a, b)) => {
                fitted += 1;
                eta_hits += a as usize;
                s2_hits += b as usize;
            }
            Err(e) => failures.push((r, e.to_string())),
        }
    }
    let mut notes = Vec::new();
    if cfg.generator.sigma2 == 0.0 {
        notes.push(
            "true sigma2 is 0: on the boundary of the parameter space, sigma2 intervals \
             (strictly positive draws) cannot contain it and eta intervals tend to over-cover"
                .to_string(),
        );
    }
    let f = fitted.max(1) as f64;
    Ok(CoverageReport {
        n_portfolios: cfg.n_portfolios,
        n_fitted: fitted,
        level: cfg.level,
        eta_coverage: eta_hits as f64 / f,
        sigma2_coverage: s2_hits as f64 / f,
        coverage_se: (cfg.level * (1.0 - cfg.level) / f).sqrt(),
        failures,
        notes,
    })
}
