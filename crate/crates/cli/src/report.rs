//! `key: value` output and the JSON fit report.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Formats like C's `%.12g`: 12 significant digits, trailing zeros dropped,
/// scientific notation outside [1e-4, 1e12).
pub fn g12(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..12).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    trim_zeros(&format!("{x:.*}", (11 - exp) as usize)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Ordered `key: value` lines.
#[derive(Default)]
pub struct Lines(Vec<(String, String)>);

impl Lines {
    pub fn text(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.0.push((key.to_string(), value.to_string()));
        self
    }

    pub fn num(&mut self, key: &str, value: f64) -> &mut Self {
        self.text(key, g12(value))
    }

    pub fn opt(&mut self, key: &str, value: Option<f64>) -> &mut Self {
        match value {
            Some(v) => self.num(key, v),
            None => self.text(key, "none"),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.0 {
            let _ = writeln!(out, "{k}: {v}");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct PriorValues {
    pub eta: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Priors {
    /// Absent when the fitted sigma2 is 0.
    pub plugin: Option<PriorValues>,
    pub predictive: Option<PriorValues>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParamReport {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q95: f64,
    pub rhat: Option<f64>,
    pub ess: f64,
}

/// Everything `fit --out` writes. Effect-valued numbers are in the
/// caller's sign convention (already flipped back when --flip-sign is on).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FitReport {
    pub method: String,
    pub seed: u64,
    pub flip_sign: bool,
    pub compounds: usize,
    pub studies: usize,
    pub chains: Option<usize>,
    pub iters: Option<usize>,
    pub burn_in: Option<usize>,
    pub eta: f64,
    pub sigma2: f64,
    pub se_eta: Option<f64>,
    pub se_sigma2: Option<f64>,
    pub log_likelihood: Option<f64>,
    pub params: Vec<ParamReport>,
    pub warnings: Vec<String>,
    pub priors: Priors,
}

/// The part of a fit report that `adjust --fit` needs.
#[derive(Debug, Deserialize)]
pub struct PriorsOnly {
    pub priors: Priors,
}
