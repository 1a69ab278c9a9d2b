//! Discounting promising early-study results.
//!
//! Early (small) studies that clear a go/no-go threshold overstate the effect
//! later seen in large studies. This crate quantifies and removes that bias
//! under a normal-normal model with a portfolio prior N(η, σ²):
//!
//! * [`conjugate`]: closed-form joint and conditional laws of the two study
//!   estimates, the discount Δ(s), probability of success and the mean of
//!   selected early results.
//! * [`prior_fit`]: estimation of (η, σ²) from many compounds by Gibbs
//!   sampling (optionally with study-level effects) or marginal maximum
//!   likelihood, plus convergence diagnostics.
//! * [`sim`]: seeded Monte Carlo of the generative model, used as an
//!   independent oracle for every closed form.
//! * [`data_io`]: portfolio CSV parsing, fixed-effect pooling and plot tables.
//!
//! Effects follow the "smaller is better" convention throughout; selection
//! means `estimate < delta`.

// Guards are written `!(x > y)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conjugate;
pub mod data_io;
pub mod error;
pub mod normal;
pub mod portfolio;
pub mod prior_fit;
pub mod rng;
pub mod sim;

pub use conjugate::{
    adjust_estimate, conditional_prediction, joint_marginal, pos_large, prob_meet_threshold,
    truncated_selected_mean, BivariateNormalSummary, ConditionalPrediction, NormalPrior,
    StudyEstimate,
};
pub use error::{Error, Result, RowError};
pub use portfolio::{CompoundRecord, Portfolio};
pub use prior_fit::{
    diagnostics, fit_gibbs, fit_gibbs_nested, fit_mle, prior_from_fit, DiagnosticsReport,
    FitMethod, FitResult, FitWarning, GibbsSettings, HyperPriors, PriorMode, VarianceHyper,
};
pub use sim::{SimConfig, SimSummary};
