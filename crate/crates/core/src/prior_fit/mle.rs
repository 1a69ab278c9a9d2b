//! Marginal maximum likelihood for (η, σ²).
//!
//! Integrating θ_i out, compound i's estimates are jointly normal with mean
//! η·1 and covariance σ²·11ᵀ + diag(σ_ij²). By Sherman-Morrison the
//! log-density splits into a term that involves only the within-compound
//! scatter and the term −½[log(v_i + σ²) + (ȳ_i − η)²/(v_i + σ²)], where
//! ȳ_i is the precision-weighted mean and v_i = 1/Σ_j σ_ij⁻². For fixed σ²
//! the maximizing η is the generalized least squares mean, so the fit is a
//! one-dimensional search over σ² ≥ 0.

use std::f64::consts::PI;

use super::{FitMethod, FitResult, FitWarning, PointEstimate};
use crate::error::{Error, Result};
use crate::portfolio::Portfolio;

const GRID_POINTS: usize = 240;
const MAX_EXPANSIONS: usize = 30;
const GOLDEN_ITERS: usize = 200;

struct Reduced {
    ybar: Vec<f64>,
    v: Vec<f64>,
    /// Everything in the log-likelihood that does not depend on (η, σ²).
    constant: f64,
}

impl Reduced {
    fn new(portfolio: &Portfolio) -> Self {
        let mut ybar = Vec::with_capacity(portfolio.n_compounds());
        let mut v = Vec::with_capacity(portfolio.n_compounds());
        let mut constant = 0.0;
        for c in portfolio.compounds() {
            let (m, w) = c.weighted_mean();
            let scatter: f64 = c
                .studies
                .iter()
                .map(|s| (s.estimate - m).powi(2) / s.variance())
                .sum();
            let log_det: f64 = c.studies.iter().map(|s| s.variance().ln()).sum();
            // log|D + σ²11ᵀ| = log|D| + log W + log(v + σ²); the last piece
            // stays in the variable part.
            constant += -0.5 * c.studies.len() as f64 * (2.0 * PI).ln()
                - 0.5 * log_det
                - 0.5 * w.ln()
                - 0.5 * scatter;
            ybar.push(m);
            v.push(1.0 / w);
        }
        Reduced { ybar, v, constant }
    }

    fn gls_eta(&self, sigma2: f64) -> f64 {
        let (num, den) = self
            .ybar
            .iter()
            .zip(&self.v)
            .fold((0.0, 0.0), |(n, d), (y, v)| {
                let w = 1.0 / (v + sigma2);
                (n + w * y, d + w)
            });
        num / den
    }

    fn log_lik(&self, eta: f64, sigma2: f64) -> f64 {
        self.constant
            + self
                .ybar
                .iter()
                .zip(&self.v)
                .map(|(y, v)| {
                    let s = v + sigma2;
                    -0.5 * (s.ln() + (y - eta).powi(2) / s)
                })
                .sum::<f64>()
    }

    fn profile(&self, sigma2: f64) -> f64 {
        self.log_lik(self.gls_eta(sigma2), sigma2)
    }

    /// ∂ℓ/∂σ² at (η, σ²).
    fn dsigma2(&self, eta: f64, sigma2: f64) -> f64 {
        self.ybar
            .iter()
            .zip(&self.v)
            .map(|(y, v)| {
                let s = v + sigma2;
                -0.5 / s + 0.5 * (y - eta).powi(2) / (s * s)
            })
            .sum()
    }

    /// Observed information matrix [[I_ηη, I_ησ], [I_ησ, I_σσ]].
    fn information(&self, eta: f64, sigma2: f64) -> [[f64; 2]; 2] {
        let mut i_ee = 0.0;
        let mut i_es = 0.0;
        let mut i_ss = 0.0;
        for (y, v) in self.ybar.iter().zip(&self.v) {
            let s = v + sigma2;
            let r = y - eta;
            i_ee += 1.0 / s;
            i_es += r / (s * s);
            i_ss += r * r / (s * s * s) - 0.5 / (s * s);
        }
        [[i_ee, i_es], [i_es, i_ss]]
    }
}

/// Full marginal log-likelihood of the portfolio at (η, σ²), θ_i integrated out.
pub fn marginal_log_likelihood(portfolio: &Portfolio, eta: f64, sigma2: f64) -> f64 {
    Reduced::new(portfolio).log_lik(eta, sigma2)
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> Result<f64> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (lo0, hi0) = (a, b);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..GOLDEN_ITERS {
        if (b - a).abs() <= 1e-14 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if !(fc.is_finite() && fd.is_finite()) {
            return Err(Error::NoConvergence {
                lower: lo0,
                upper: hi0,
                detail: format!("non-finite profile likelihood in [{a}, {b}]"),
            });
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if (b - a).abs() > 1e-8 * (1.0 + a.abs().max(b.abs())) {
        return Err(Error::NoConvergence {
            lower: lo0,
            upper: hi0,
            detail: format!("bracket still [{a}, {b}] after {GOLDEN_ITERS} iterations"),
        });
    }
    Ok(0.5 * (a + b))
}

/// Marginal maximum likelihood fit.
///
/// σ² is located by a log-spaced grid scan on `{0} ∪ [u·1e-12, u]` followed
/// by golden-section refinement inside the best grid cell; `u` grows until
/// the optimum is interior. The estimate is clipped to 0 (with
/// [`FitWarning::BoundaryVariance`]) when the profile slope at zero is
/// non-positive and zero is the best grid point. Standard errors come from
/// the inverse observed information; at the boundary only η's is reported.
pub fn fit_mle(portfolio: &Portfolio) -> Result<FitResult> {
    let r = Reduced::new(portfolio);
    let n = r.ybar.len() as f64;
    let mean = r.ybar.iter().sum::<f64>() / n;
    let spread = r.ybar.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    let vmax = r.v.iter().cloned().fold(0.0, f64::max);
    let mut upper = 10.0 * (spread + vmax);

    let mut expansions = 0;
    let sigma2 = loop {
        let mut grid = Vec::with_capacity(GRID_POINTS + 1);
        grid.push(0.0);
        let lo = upper * 1e-12;
        for k in 0..GRID_POINTS {
            grid.push(lo * (upper / lo).powf(k as f64 / (GRID_POINTS - 1) as f64));
        }
        let values: Vec<f64> = grid.iter().map(|&s| r.profile(s)).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NoConvergence {
                lower: 0.0,
                upper,
                detail: "non-finite profile likelihood on the search grid".into(),
            });
        }
        let best = values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap();

        if best == grid.len() - 1 {
            expansions += 1;
            if expansions > MAX_EXPANSIONS {
                return Err(Error::NoConvergence {
                    lower: 0.0,
                    upper,
                    detail: "profile likelihood still increasing at the upper bracket".into(),
                });
            }
            upper *= 10.0;
            continue;
        }
        // Near a boundary optimum the profile is flat to second order, so
        // grid points just above zero can win by rounding noise alone.
        let flat = values[best] - values[0] <= 1e-12 * (1.0 + values[0].abs());
        if flat && r.dsigma2(r.gls_eta(0.0), 0.0) <= 0.0 {
            break 0.0;
        }
        let a = if best == 0 { 0.0 } else { grid[best - 1] };
        let b = grid[best + 1];
        break golden_max(|s| r.profile(s), a, b)?;
    };

    let eta = r.gls_eta(sigma2);
    let info = r.information(eta, sigma2);
    let (se_eta, se_sigma2) = if sigma2 > 0.0 {
        let det = info[0][0] * info[1][1] - info[0][1] * info[0][1];
        if det > 0.0 && info[1][1] > 0.0 {
            (
                Some((info[1][1] / det).sqrt()),
                Some((info[0][0] / det).sqrt()),
            )
        } else {
            (Some(info[0][0].recip().sqrt()), None)
        }
    } else {
        (Some(info[0][0].recip().sqrt()), None)
    };

    let mut warnings = Vec::new();
    if portfolio.n_compounds() < 2 {
        warnings.push(FitWarning::SmallPortfolio {
            compounds: portfolio.n_compounds(),
        });
    }
    if sigma2 == 0.0 {
        warnings.push(FitWarning::BoundaryVariance);
    }
    Ok(FitResult {
        method: FitMethod::Mle,
        draws: None,
        point: PointEstimate {
            eta,
            sigma2,
            se_eta,
            se_sigma2,
        },
        diagnostics: None,
        warnings,
        seed: 0,
        chains: 0,
        log_likelihood: Some(r.log_lik(eta, sigma2)),
    })
}
