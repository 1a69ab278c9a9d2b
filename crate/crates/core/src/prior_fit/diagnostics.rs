//! Split-R̂ and effective sample size.
//!
//! Both follow the split-chain formulation: every chain is cut into two
//! halves (the middle draw is dropped for odd lengths) and the halves are
//! treated as separate chains. ESS uses Geyer's initial monotone sequence
//! on the multi-chain autocorrelation estimate.

use serde::{Deserialize, Serialize};

use super::Draws;

/// R̂ above this value flags a parameter as not converged.
pub const RHAT_THRESHOLD: f64 = 1.05;
/// Effective sample sizes below this value are flagged.
pub const MIN_ESS: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostic {
    pub name: String,
    /// `None` with a single chain.
    pub rhat: Option<f64>,
    pub ess: f64,
    pub rhat_flag: bool,
    pub ess_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub params: Vec<ParamDiagnostic>,
    pub notices: Vec<String>,
}

impl DiagnosticsReport {
    pub fn flagged(&self) -> impl Iterator<Item = &ParamDiagnostic> {
        self.params.iter().filter(|p| p.rhat_flag || p.ess_flag)
    }

    pub fn any_flag(&self) -> bool {
        self.flagged().next().is_some()
    }

    pub fn max_rhat(&self) -> Option<f64> {
        self.params
            .iter()
            .filter_map(|p| p.rhat)
            .fold(None, |acc, r| Some(acc.map_or(r, |a: f64| a.max(r))))
    }

    pub fn min_ess(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.ess)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn get(&self, name: &str) -> Option<&ParamDiagnostic> {
        self.params.iter().find(|p| p.name == name)
    }
}

fn split_halves(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    chains
        .iter()
        .flat_map(|c| {
            let h = c.len() / 2;
            [&c[..h], &c[c.len() - h..]]
        })
        .collect()
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64], m: f64) -> f64 {
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Split-R̂ over `chains` (each of equal length). `None` for fewer than two
/// chains or fewer than four draws per chain.
pub fn split_rhat(chains: &[Vec<f64>]) -> Option<f64> {
    if chains.len() < 2 || chains[0].len() < 4 {
        return None;
    }
    // Exact test first: for constant chains W and B are rounding noise.
    if chains.iter().all(|c| c.iter().all(|&v| v == c[0])) {
        let first = chains[0][0];
        return Some(if chains.iter().all(|c| c[0] == first) {
            1.0
        } else {
            f64::INFINITY
        });
    }
    let halves = split_halves(chains);
    let (w, b, n) = between_within(&halves);
    if w == 0.0 {
        return Some(f64::INFINITY);
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    Some((var_plus / w).sqrt())
}

/// (W, B, n): mean within-chain variance, between-chain variance
/// n·Var(chain means), chain length.
fn between_within(chains: &[&[f64]]) -> (f64, f64, f64) {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, &m)| sample_var(c, m))
        .sum::<f64>()
        / chains.len() as f64;
    let grand = mean(&means);
    let b = if chains.len() > 1 {
        n * sample_var(&means, grand)
    } else {
        0.0
    };
    (w, b, n)
}

fn autocovariance(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    x[..n - lag]
        .iter()
        .zip(&x[lag..])
        .map(|(a, b)| (a - m) * (b - m))
        .sum::<f64>()
        / n as f64
}

/// Multi-chain effective sample size of split chains.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let total: usize = chains.iter().map(Vec::len).sum();
    if chains.is_empty() || chains[0].len() < 4 {
        return total as f64;
    }
    let halves = split_halves(chains);
    let m = halves.len() as f64;
    let (w, b, n) = between_within(&halves);
    let var_plus = (n - 1.0) / n * w + b / n;
    let draws = m * n;
    if !(var_plus > 0.0) {
        return draws;
    }
    let means: Vec<f64> = halves.iter().map(|c| mean(c)).collect();
    let rho = |t: usize| -> f64 {
        let acov = halves
            .iter()
            .zip(&means)
            .map(|(c, &mu)| autocovariance(c, mu, t))
            .sum::<f64>()
            / m;
        1.0 - (w - acov) / var_plus
    };

    let n_len = n as usize;
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n_len {
        let mut pair = rho(t) + rho(t + 1);
        if pair < 0.0 {
            break;
        }
        if pair > prev_pair {
            pair = prev_pair;
        }
        tau += 2.0 * pair;
        prev_pair = pair;
        t += 2;
    }
    let tau = tau.max(1.0 / draws.log10().max(1.0));
    draws / tau
}

/// Split-R̂ and ESS for every parameter of `draws`.
pub fn diagnostics(draws: &Draws) -> DiagnosticsReport {
    let mut notices = Vec::new();
    if draws.n_chains() < 2 {
        notices.push("single chain: R-hat not computed".to_string());
    } else if draws.n_iters() < 4 {
        notices.push("fewer than 4 draws per chain: R-hat not computed".to_string());
    }
    let params = (0..draws.n_params())
        .map(|p| {
            let chains: Vec<Vec<f64>> = (0..draws.n_chains())
                .map(|c| draws.chain_param(c, p))
                .collect();
            let rhat = split_rhat(&chains);
            let ess = effective_sample_size(&chains);
            ParamDiagnostic {
                name: draws.names()[p].clone(),
                rhat,
                ess,
                rhat_flag: rhat.is_some_and(|r| !(r <= RHAT_THRESHOLD)),
                ess_flag: ess < MIN_ESS,
            }
        })
        .collect();
    DiagnosticsReport { params, notices }
}
