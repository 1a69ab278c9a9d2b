use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gibbs::{check_finite, draw_eta, draw_sigma2, initial_state, normal, CompoundStats};
use super::{Draws, FitMethod, FitResult, FitWarning, GibbsSettings, HyperPriors};
use crate::error::{require_positive, Result};
use crate::portfolio::Portfolio;
use crate::rng;

/// InverseGamma(shape, rate) hyperprior shared by every compound's
/// between-study variance σ_i².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceHyper {
    pub shape: f64,
    pub rate: f64,
}

impl Default for VarianceHyper {
    /// Prior mean 0.01 (between-study SD around 0.1 effect units), with a
    /// finite variance.
    fn default() -> Self {
        VarianceHyper {
            shape: 3.0,
            rate: 0.02,
        }
    }
}

impl VarianceHyper {
    pub fn validate(&self) -> Result<()> {
        require_positive("sigma_i2 shape", self.shape)?;
        require_positive("sigma_i2 rate", self.rate)
    }
}

struct NestedData {
    y: Vec<Vec<f64>>,
    var: Vec<Vec<f64>>,
}

fn run_chain(
    data: &NestedData,
    init_stats: &CompoundStats,
    hyper: &HyperPriors,
    vhyper: &VarianceHyper,
    settings: &GibbsSettings,
    chain: usize,
) -> Result<Vec<f64>> {
    let n = data.y.len();
    let n_study: usize = data.y.iter().map(Vec::len).sum();
    let mut rng = rng::stream(settings.seed, chain as u64);
    let (mut eta, mut sigma2) = initial_state(init_stats, &mut rng);
    let prior_mean = vhyper.rate / (vhyper.shape + 1.0);
    let mut sigma_i2 = vec![prior_mean; n];
    let mut theta = vec![0.0; n];
    let mut theta_ij: Vec<Vec<f64>> = data.y.iter().map(|ys| vec![0.0; ys.len()]).collect();

    let width = 2 + 2 * n + n_study;
    let mut row = vec![0.0; width];
    let mut out = Vec::with_capacity(settings.retained() * width);

    for iter in 0..settings.iters {
        for i in 0..n {
            // (θ_i, θ_i·) drawn as a block: θ_i with θ_ij integrated out,
            // then each θ_ij given θ_i. Keeps mixing fast when σ_i² → 0.
            let mut prec = 1.0 / sigma2;
            let mut num = eta / sigma2;
            for (y, v) in data.y[i].iter().zip(&data.var[i]) {
                let total = v + sigma_i2[i];
                prec += 1.0 / total;
                num += y / total;
            }
            theta[i] = normal(&mut rng, num / prec, 1.0 / prec);

            let mut ss = 0.0;
            for (j, (y, v)) in data.y[i].iter().zip(&data.var[i]).enumerate() {
                let p = 1.0 / v + 1.0 / sigma_i2[i];
                let m = (y / v + theta[i] / sigma_i2[i]) / p;
                theta_ij[i][j] = normal(&mut rng, m, 1.0 / p);
                ss += (theta_ij[i][j] - theta[i]).powi(2);
            }
            let m_i = data.y[i].len() as f64;
            sigma_i2[i] =
                rng::inverse_gamma(&mut rng, vhyper.shape + 0.5 * m_i, vhyper.rate + 0.5 * ss)?;
        }
        eta = draw_eta(&mut rng, hyper, &theta, sigma2);
        sigma2 = draw_sigma2(&mut rng, hyper, &theta, eta)?;

        row[0] = eta;
        row[1] = sigma2;
        row[2..2 + n].copy_from_slice(&theta);
        row[2 + n..2 + 2 * n].copy_from_slice(&sigma_i2);
        let mut k = 2 + 2 * n;
        for t in &theta_ij {
            row[k..k + t.len()].copy_from_slice(t);
            k += t.len();
        }
        check_finite(&row, chain, iter)?;
        if iter >= settings.burn_in {
            out.extend_from_slice(&row);
        }
    }
    Ok(out)
}

/// Gibbs sampler for the three-level model θ̂_ij ~ N(θ_ij, σ_ij²),
/// θ_ij ~ N(θ_i, σ_i²), θ_i ~ N(η, σ²).
///
/// Draw columns are `eta`, `sigma2`, `theta[id]` for each compound,
/// `sigma_i2[id]` for each compound, then `theta[id/study]` per study.
/// Compounds with a single study trigger
/// [`FitWarning::SingleStudyCompounds`]: their σ_i² is informed almost
/// entirely by `vhyper`.
pub fn fit_gibbs_nested(
    portfolio: &Portfolio,
    hyper: &HyperPriors,
    vhyper: &VarianceHyper,
    settings: &GibbsSettings,
) -> Result<FitResult> {
    hyper.validate()?;
    vhyper.validate()?;
    settings.validate()?;

    let data = NestedData {
        y: portfolio
            .compounds()
            .iter()
            .map(|c| c.studies.iter().map(|s| s.estimate).collect())
            .collect(),
        var: portfolio
            .compounds()
            .iter()
            .map(|c| c.studies.iter().map(|s| s.variance()).collect())
            .collect(),
    };
    let stats = CompoundStats::new(portfolio);

    let chains = (0..settings.chains)
        .into_par_iter()
        .map(|c| run_chain(&data, &stats, hyper, vhyper, settings, c))
        .collect::<Result<Vec<_>>>()?;

    let compounds = portfolio.compounds();
    let mut names = vec!["eta".to_string(), "sigma2".to_string()];
    names.extend(
        compounds
            .iter()
            .map(|c| format!("theta[{}]", c.compound_id)),
    );
    names.extend(
        compounds
            .iter()
            .map(|c| format!("sigma_i2[{}]", c.compound_id)),
    );
    for c in compounds {
        for (j, s) in c.studies.iter().enumerate() {
            let study = s.label.clone().unwrap_or_else(|| (j + 1).to_string());
            names.push(format!("theta[{}/{}]", c.compound_id, study));
        }
    }

    let mut fit = FitResult::from_draws(
        FitMethod::GibbsNested,
        Draws::new(names, chains)?,
        settings.seed,
    )?;
    let single: Vec<String> = compounds
        .iter()
        .filter(|c| c.studies.len() == 1)
        .map(|c| c.compound_id.clone())
        .collect();
    if !single.is_empty() {
        fit.warnings.push(FitWarning::SingleStudyCompounds {
            compound_ids: single,
        });
    }
    if portfolio.n_compounds() < 2 {
        fit.warnings.push(FitWarning::SmallPortfolio {
            compounds: portfolio.n_compounds(),
        });
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_layout() {
        let p = Portfolio::from_estimates(vec![
            ("a", vec![(0.1, 0.2), (0.3, 0.2)]),
            ("b", vec![(0.5, 0.3)]),
        ])
        .unwrap();
        let s = GibbsSettings {
            chains: 2,
            iters: 200,
            burn_in: 50,
            seed: 9,
        };
        let fit =
            fit_gibbs_nested(&p, &HyperPriors::default(), &VarianceHyper::default(), &s).unwrap();
        let d = fit.draws.as_ref().unwrap();
        let names: Vec<&str> = d.names().iter().map(String::as_str).collect();
        assert_eq!(
            names,
            [
                "eta",
                "sigma2",
                "theta[a]",
                "theta[b]",
                "sigma_i2[a]",
                "sigma_i2[b]",
                "theta[a/1]",
                "theta[a/2]",
                "theta[b/1]"
            ]
        );
        match &fit.warnings[0] {
            FitWarning::SingleStudyCompounds { compound_ids } => assert_eq!(compound_ids, &["b"]),
            w => panic!("unexpected warning {w:?}"),
        }
    }
}
