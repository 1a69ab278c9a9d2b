//! Closed-form normal-normal machinery.
//!
//! The generative model is
//!
//! ```text
//! theta         ~ N(eta, sigma2)          portfolio prior
//! small | theta ~ N(theta, sigma_s^2)     early (small) study estimate
//! large | theta ~ N(theta, sigma_l^2)     later (large) study estimate
//! ```
//!
//! with the two estimates conditionally independent given `theta`. Smaller
//! effects are better; a compound is advanced when `small < delta`.

use serde::{Deserialize, Serialize};

use crate::error::{require_finite, require_positive, Error, Result};
use crate::normal;

/// Distribution N(eta, sigma2) of true effects across a portfolio of
/// similar compounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalPrior {
    pub eta: f64,
    pub sigma2: f64,
}

impl NormalPrior {
    pub fn new(eta: f64, sigma2: f64) -> Result<Self> {
        let prior = NormalPrior { eta, sigma2 };
        prior.validate()?;
        Ok(prior)
    }

    pub fn validate(&self) -> Result<()> {
        require_finite("eta", self.eta)?;
        require_positive("sigma2", self.sigma2)
    }

    pub fn sd(&self) -> f64 {
        self.sigma2.sqrt()
    }

    /// Shrinkage weight σ²/(σ_s²+σ²) applied to a study with standard error `sigma_s`.
    pub fn shrink_weight(&self, sigma_s: f64) -> f64 {
        self.sigma2 / (sigma_s * sigma_s + self.sigma2)
    }

    /// The same prior with effect direction reversed.
    pub fn flipped(&self) -> Self {
        NormalPrior {
            eta: -self.eta,
            sigma2: self.sigma2,
        }
    }
}

/// One study's treatment-effect estimate and its standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyEstimate {
    pub estimate: f64,
    pub std_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl StudyEstimate {
    pub fn new(estimate: f64, std_error: f64) -> Result<Self> {
        let e = StudyEstimate {
            estimate,
            std_error,
            label: None,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        require_finite("estimate", self.estimate)?;
        require_positive("std_error", self.std_error)
    }

    pub fn variance(&self) -> f64 {
        self.std_error * self.std_error
    }
}

/// Unconditional joint law of the (small, large) estimate pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BivariateNormalSummary {
    pub mean_s: f64,
    pub mean_l: f64,
    pub var_s: f64,
    pub var_l: f64,
    pub cov: f64,
}

impl BivariateNormalSummary {
    pub fn correlation(&self) -> f64 {
        self.cov / (self.var_s * self.var_l).sqrt()
    }
}

/// Law of the large-study estimate given the small-study estimate `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalPrediction {
    pub cond_mean: f64,
    pub cond_var: f64,
    /// σ²/(σ_s²+σ²): fraction of the early deviation from η that is retained.
    pub shrink_weight: f64,
    /// Discount Δ(s) = cond_mean − s.
    pub bias: f64,
}

impl ConditionalPrediction {
    pub fn cond_sd(&self) -> f64 {
        self.cond_var.sqrt()
    }
}

/// Pr(small ≤ delta): the chance that a compound drawn from the portfolio
/// meets the threshold in a study with standard error `sigma_s`.
pub fn prob_meet_threshold(prior: &NormalPrior, sigma_s: f64, delta: f64) -> Result<f64> {
    prior.validate()?;
    require_positive("sigma_s", sigma_s)?;
    require_finite("delta", delta)?;
    let tau = (sigma_s * sigma_s + prior.sigma2).sqrt();
    Ok(normal::cdf((delta - prior.eta) / tau))
}

pub fn joint_marginal(
    prior: &NormalPrior,
    sigma_s: f64,
    sigma_l: f64,
) -> Result<BivariateNormalSummary> {
    prior.validate()?;
    require_positive("sigma_s", sigma_s)?;
    require_positive("sigma_l", sigma_l)?;
    Ok(BivariateNormalSummary {
        mean_s: prior.eta,
        mean_l: prior.eta,
        var_s: sigma_s * sigma_s + prior.sigma2,
        var_l: sigma_l * sigma_l + prior.sigma2,
        cov: prior.sigma2,
    })
}

pub fn conditional_prediction(
    prior: &NormalPrior,
    sigma_s: f64,
    sigma_l: f64,
    s: f64,
) -> Result<ConditionalPrediction> {
    prior.validate()?;
    require_positive("sigma_s", sigma_s)?;
    require_positive("sigma_l", sigma_l)?;
    require_finite("s", s)?;

    let var_s = sigma_s * sigma_s;
    let total_s = var_s + prior.sigma2;
    let w = prior.sigma2 / total_s;
    let cond_mean = prior.eta + w * (s - prior.eta);
    // (σ_l² + σ²) − σ⁴/(σ_s² + σ²) rearranged to σ_l² + σ²σ_s²/(σ_s²+σ²),
    // which cannot cancel to a non-positive value.
    let cond_var = sigma_l * sigma_l + prior.sigma2 * var_s / total_s;
    Ok(ConditionalPrediction {
        cond_mean,
        cond_var,
        shrink_weight: w,
        bias: cond_mean - s,
    })
}

/// Shrinks an early estimate toward the prior mean. Equal to the posterior
/// mean E(θ | small = s) and to E(large | small = s).
pub fn adjust_estimate(prior: &NormalPrior, small: &StudyEstimate) -> Result<f64> {
    prior.validate()?;
    small.validate()?;
    let w = prior.shrink_weight(small.std_error);
    Ok(prior.eta + w * (small.estimate - prior.eta))
}

/// Pr(large < delta | small = s): probability that the later study meets
/// the threshold given the early result.
pub fn pos_large(
    prior: &NormalPrior,
    sigma_s: f64,
    sigma_l: f64,
    s: f64,
    delta: f64,
) -> Result<f64> {
    require_finite("delta", delta)?;
    let cp = conditional_prediction(prior, sigma_s, sigma_l, s)?;
    Ok(normal::cdf((delta - cp.cond_mean) / cp.cond_sd()))
}

/// Smallest selection probability accepted by [`truncated_selected_mean`].
pub const MIN_SELECTION_PROBABILITY: f64 = 1e-12;

/// E(small | small < delta): mean early estimate among advanced compounds.
pub fn truncated_selected_mean(prior: &NormalPrior, sigma_s: f64, delta: f64) -> Result<f64> {
    prior.validate()?;
    require_positive("sigma_s", sigma_s)?;
    if delta.is_nan() {
        return Err(Error::Domain("delta must not be NaN".into()));
    }
    let tau = (sigma_s * sigma_s + prior.sigma2).sqrt();
    let z = (delta - prior.eta) / tau;
    let p = normal::cdf(z);
    if !(p > MIN_SELECTION_PROBABILITY) {
        return Err(Error::DegenerateSelection {
            delta,
            probability: p,
            floor: MIN_SELECTION_PROBABILITY,
        });
    }
    if delta == f64::INFINITY {
        return Ok(prior.eta);
    }
    Ok(prior.eta - tau * normal::inverse_mills(z))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> NormalPrior {
        NormalPrior::new(-1.0, 1.0).unwrap()
    }

    #[test]
    fn prior_rejects_degenerate_variance() {
        assert!(NormalPrior::new(0.0, 0.0).is_err());
        assert!(NormalPrior::new(0.0, -1.0).is_err());
        assert!(NormalPrior::new(f64::NAN, 1.0).is_err());
        assert!(StudyEstimate::new(1.0, 0.0).is_err());
    }

    #[test]
    fn threshold_at_prior_mean_is_half() {
        for &sd in &[0.05, 0.5, 1.5] {
            assert_eq!(prob_meet_threshold(&base(), sd, -1.0).unwrap(), 0.5);
        }
    }

    #[test]
    fn threshold_rejects_bad_sigma() {
        assert!(prob_meet_threshold(&base(), 0.0, -1.5).is_err());
        assert!(prob_meet_threshold(&base(), f64::INFINITY, -1.5).is_err());
        assert!(prob_meet_threshold(&base(), -0.2, -1.5).is_err());
    }

    #[test]
    fn joint_marginal_reference() {
        let j = joint_marginal(&base(), 0.5, 0.3).unwrap();
        assert_eq!(j.mean_s, -1.0);
        assert_eq!(j.mean_l, -1.0);
        assert!((j.var_s - 1.25).abs() < 1e-15);
        assert!((j.var_l - 1.09).abs() < 1e-15);
        assert_eq!(j.cov, 1.0);
        // 1/sqrt(1.25 * 1.09), evaluated at 40 digits
        assert!((j.correlation() - 0.856_705_873_756_238_7).abs() < 1e-14);
    }

    #[test]
    fn joint_marginal_without_heterogeneity() {
        let prior = NormalPrior::new(3.0, 1e-12).unwrap();
        let j = joint_marginal(&prior, 0.5, 0.3).unwrap();
        assert!(j.correlation().abs() < 1e-10);
        assert_eq!(j.mean_s, 3.0);
    }

    #[test]
    fn conditional_reference() {
        let cp = conditional_prediction(&base(), 0.5, 0.3, -1.5).unwrap();
        assert!((cp.cond_mean + 1.4).abs() < 1e-14);
        assert!((cp.cond_var - 0.29).abs() < 1e-14);
        assert!((cp.bias - 0.1).abs() < 1e-14);
        assert!((cp.shrink_weight - 0.8).abs() < 1e-15);
    }

    #[test]
    fn conditional_at_prior_mean_has_no_bias() {
        let cp = conditional_prediction(&base(), 0.5, 0.3, -1.0).unwrap();
        assert_eq!(cp.bias, 0.0);
        assert_eq!(cp.cond_mean, -1.0);
    }

    #[test]
    fn exact_small_study_needs_no_discount() {
        let cp = conditional_prediction(&base(), 1e-8, 0.3, -2.7).unwrap();
        assert!(cp.bias.abs() < 1e-12);
        assert!((cp.cond_mean + 2.7).abs() < 1e-12);
    }

    #[test]
    fn adjust_matches_conditional_mean() {
        let small = StudyEstimate::new(-1.5, 0.5).unwrap();
        let adj = adjust_estimate(&base(), &small).unwrap();
        assert!((adj + 1.4).abs() < 1e-14);
        let flat = NormalPrior::new(-1.0, 1e8).unwrap();
        assert!((adjust_estimate(&flat, &small).unwrap() + 1.5).abs() < 1e-8);
        let at_mean = StudyEstimate::new(-1.0, 0.5).unwrap();
        assert_eq!(adjust_estimate(&base(), &at_mean).unwrap(), -1.0);
    }

    #[test]
    fn pos_reference() {
        let p = pos_large(&base(), 0.5, 0.3, -1.5, -1.5).unwrap();
        // Φ(-0.1/sqrt(0.29)) at 40 digits: 0.42634184216732130...
        assert!((p - 0.426_341_842_167_321_3).abs() < 1e-12);
        assert!((pos_large(&base(), 0.5, 0.3, -1.5, 1e6).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(pos_large(&base(), 0.5, 0.3, -1.0, -1.0).unwrap(), 0.5);
    }

    #[test]
    fn truncated_mean_reference() {
        let m = truncated_selected_mean(&base(), 0.5, -1.5).unwrap();
        // η − τ φ(z)/Φ(z) at 40 digits: −2.23284776140269447...
        assert!((m + 2.232_847_761_402_694_5).abs() < 1e-12);
        assert!(m < -1.5);
        let open = truncated_selected_mean(&base(), 0.5, 1e6).unwrap();
        assert!((open + 1.0).abs() < 1e-12);
    }

    #[test]
    fn truncated_mean_degenerate_selection() {
        let err = truncated_selected_mean(&base(), 0.5, -40.0).unwrap_err();
        assert!(matches!(err, Error::DegenerateSelection { .. }));
    }
}
