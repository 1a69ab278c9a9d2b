use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{Draws, FitMethod, FitResult, FitWarning, GibbsSettings, HyperPriors};
use crate::error::{Error, Result};
use crate::portfolio::Portfolio;
use crate::rng::{self, StreamRng};

/// Per-compound sufficient statistics: Σ θ̂_ij/σ_ij² and Σ 1/σ_ij².
pub(super) struct CompoundStats {
    pub wy: Vec<f64>,
    pub w: Vec<f64>,
}

impl CompoundStats {
    pub fn new(portfolio: &Portfolio) -> Self {
        let (wy, w) = portfolio
            .compounds()
            .iter()
            .map(|c| {
                let (m, w) = c.weighted_mean();
                (m * w, w)
            })
            .unzip();
        CompoundStats { wy, w }
    }

    pub fn means(&self) -> impl Iterator<Item = f64> + '_ {
        self.wy.iter().zip(&self.w).map(|(a, b)| a / b)
    }
}

/// Overdispersed starting values for (η, σ²), spread around the data.
pub(super) fn initial_state(stats: &CompoundStats, rng: &mut StreamRng) -> (f64, f64) {
    let means: Vec<f64> = stats.means().collect();
    let n = means.len() as f64;
    let center = means.iter().sum::<f64>() / n;
    let spread = means.iter().map(|m| (m - center).powi(2)).sum::<f64>() / n
        + stats.w.iter().map(|w| 1.0 / w).sum::<f64>() / n;
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    (center + 2.0 * spread.sqrt() * z1, spread * z2.exp())
}

pub(super) fn normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, var: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    mean + var.sqrt() * z
}

/// η | θ, σ² under the N(eta_mean, eta_var) hyperprior.
pub(super) fn draw_eta(
    rng: &mut StreamRng,
    hyper: &HyperPriors,
    theta: &[f64],
    sigma2: f64,
) -> f64 {
    let prec = 1.0 / hyper.eta_var + theta.len() as f64 / sigma2;
    let sum: f64 = theta.iter().sum();
    let mean = (hyper.eta_mean / hyper.eta_var + sum / sigma2) / prec;
    normal(rng, mean, 1.0 / prec)
}

/// σ² | θ, η ~ InverseGamma(shape + I/2, rate + ½ Σ(θ_i − η)²).
pub(super) fn draw_sigma2(
    rng: &mut StreamRng,
    hyper: &HyperPriors,
    theta: &[f64],
    eta: f64,
) -> Result<f64> {
    let ss: f64 = theta.iter().map(|t| (t - eta).powi(2)).sum();
    rng::inverse_gamma(
        rng,
        hyper.sigma2_shape + 0.5 * theta.len() as f64,
        hyper.sigma2_rate + 0.5 * ss,
    )
}

pub(super) fn check_finite(values: &[f64], chain: usize, iter: usize) -> Result<()> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite update {v} in chain {chain} at iteration {iter}"
        )));
    }
    if values[1] <= 0.0 {
        return Err(Error::Numerical(format!(
            "sigma2 underflowed to {} in chain {chain} at iteration {iter}",
            values[1]
        )));
    }
    Ok(())
}

fn run_chain(
    stats: &CompoundStats,
    hyper: &HyperPriors,
    settings: &GibbsSettings,
    chain: usize,
) -> Result<Vec<f64>> {
    let n = stats.w.len();
    let mut rng = rng::stream(settings.seed, chain as u64);
    let (mut eta, mut sigma2) = initial_state(stats, &mut rng);
    let mut theta = vec![0.0; n];
    let mut out = Vec::with_capacity(settings.retained() * (n + 2));
    let mut row = vec![0.0; n + 2];

    for iter in 0..settings.iters {
        for ((t, &w), &wy) in theta.iter_mut().zip(&stats.w).zip(&stats.wy) {
            let prec = 1.0 / sigma2 + w;
            *t = normal(&mut rng, (eta / sigma2 + wy) / prec, 1.0 / prec);
        }
        eta = draw_eta(&mut rng, hyper, &theta, sigma2);
        sigma2 = draw_sigma2(&mut rng, hyper, &theta, eta)?;

        row[0] = eta;
        row[1] = sigma2;
        row[2..].copy_from_slice(&theta);
        check_finite(&row, chain, iter)?;
        if iter >= settings.burn_in {
            out.extend_from_slice(&row);
        }
    }
    Ok(out)
}

/// Conjugate Gibbs sampler for the two-level normal hierarchy.
///
/// Each iteration updates θ_i | η, σ², data (normal, precision
/// 1/σ² + Σ_j 1/σ_ij²), then η | θ, σ² (normal), then σ² | θ, η
/// (inverse gamma). Chain `c` draws from ChaCha stream `c` under
/// `settings.seed`, so output is identical for identical settings no matter
/// how many threads execute the chains.
pub fn fit_gibbs(
    portfolio: &Portfolio,
    hyper: &HyperPriors,
    settings: &GibbsSettings,
) -> Result<FitResult> {
    hyper.validate()?;
    settings.validate()?;
    let stats = CompoundStats::new(portfolio);

    let chains = (0..settings.chains)
        .into_par_iter()
        .map(|c| run_chain(&stats, hyper, settings, c))
        .collect::<Result<Vec<_>>>()?;

    let mut names = vec!["eta".to_string(), "sigma2".to_string()];
    names.extend(
        portfolio
            .compounds()
            .iter()
            .map(|c| format!("theta[{}]", c.compound_id)),
    );
    let mut fit =
        FitResult::from_draws(FitMethod::Gibbs, Draws::new(names, chains)?, settings.seed)?;
    if portfolio.n_compounds() < 2 {
        fit.warnings.push(FitWarning::SmallPortfolio {
            compounds: portfolio.n_compounds(),
        });
    }
    Ok(fit)
}
