//! Numeric tables behind the standard figures, written as TSV.
//!
//! File layout:
//!
//! ```text
//! # figure=bias_vs_s eta=-1 sigma2=1 sigma_s_grid=0.1,0.5 x_min=-3 x_max=1 n_points=41
//! s    bias[sigma_s=0.1]    bias[sigma_s=0.5]
//! -3   ...
//! ```
//!
//! All numbers are printed in Rust's shortest round-trip form, so parsing a
//! table back yields bit-identical values.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::conjugate::{self, NormalPrior, StudyEstimate};
use crate::data_io::pool::pool_fixed_effect;
use crate::error::{Error, Result};
use crate::normal;
use crate::portfolio::Portfolio;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FigureId {
    /// Densities of θ and of the small-study estimate for each σ_s.
    Density,
    /// Pr(small ≤ δ) as a function of σ_s.
    ThresholdVsSigmaS,
    /// Δ(s) for each σ_s.
    BiasVsS,
    /// Pr(large < δ | small = s) for each σ_s.
    PosVsS,
    /// Observed versus adjusted small-study effects against the pooled
    /// large-study result, per small study in a portfolio.
    AdjustCompare,
}

impl FigureId {
    pub const ALL: [FigureId; 5] = [
        FigureId::Density,
        FigureId::ThresholdVsSigmaS,
        FigureId::BiasVsS,
        FigureId::PosVsS,
        FigureId::AdjustCompare,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FigureId::Density => "density",
            FigureId::ThresholdVsSigmaS => "threshold_vs_sigma_s",
            FigureId::BiasVsS => "bias_vs_s",
            FigureId::PosVsS => "pos_vs_s",
            FigureId::AdjustCompare => "adjust_compare",
        }
    }

    fn required(&self) -> &'static [&'static str] {
        match self {
            FigureId::Density | FigureId::BiasVsS => &[
                "eta",
                "sigma2",
                "sigma_s_grid",
                "x_min",
                "x_max",
                "n_points",
            ],
            FigureId::ThresholdVsSigmaS => {
                &["eta", "sigma2", "delta", "x_min", "x_max", "n_points"]
            }
            FigureId::PosVsS => &[
                "eta",
                "sigma2",
                "sigma_s_grid",
                "sigma_l",
                "delta",
                "x_min",
                "x_max",
                "n_points",
            ],
            FigureId::AdjustCompare => &["eta", "sigma2", "small_phase", "large_phase"],
        }
    }
}

impl FromStr for FigureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FigureId::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| {
                Error::Validation(format!(
                    "unknown figure '{s}'; expected one of {}",
                    FigureId::ALL.map(|f| f.as_str()).join(", ")
                ))
            })
    }
}

/// Generating parameters. Which ones are required depends on the figure.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotParams {
    pub eta: Option<f64>,
    pub sigma2: Option<f64>,
    pub sigma_s_grid: Option<Vec<f64>>,
    pub sigma_l: Option<f64>,
    pub delta: Option<f64>,
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub n_points: Option<usize>,
    pub small_phase: Option<String>,
    pub large_phase: Option<String>,
}

fn join_floats(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

impl PlotParams {
    fn entries(&self) -> Vec<(&'static str, String)> {
        let mut e = Vec::new();
        let mut f = |k, v: Option<String>| {
            if let Some(v) = v {
                e.push((k, v));
            }
        };
        f("eta", self.eta.map(|v| v.to_string()));
        f("sigma2", self.sigma2.map(|v| v.to_string()));
        f(
            "sigma_s_grid",
            self.sigma_s_grid.as_deref().map(join_floats),
        );
        f("sigma_l", self.sigma_l.map(|v| v.to_string()));
        f("delta", self.delta.map(|v| v.to_string()));
        f("x_min", self.x_min.map(|v| v.to_string()));
        f("x_max", self.x_max.map(|v| v.to_string()));
        f("n_points", self.n_points.map(|v| v.to_string()));
        f("small_phase", self.small_phase.clone());
        f("large_phase", self.large_phase.clone());
        e
    }

    fn has(&self, key: &str) -> bool {
        self.entries().iter().any(|(k, _)| *k == key)
    }

    /// Names of required parameters that are not set.
    pub fn missing_for(&self, figure: FigureId) -> Vec<&'static str> {
        figure
            .required()
            .iter()
            .copied()
            .filter(|k| !self.has(k))
            .collect()
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::Validation(format!("param {key}: '{v}' is not a number")))
        };
        match key {
            "eta" => self.eta = Some(num(value)?),
            "sigma2" => self.sigma2 = Some(num(value)?),
            "sigma_l" => self.sigma_l = Some(num(value)?),
            "delta" => self.delta = Some(num(value)?),
            "x_min" => self.x_min = Some(num(value)?),
            "x_max" => self.x_max = Some(num(value)?),
            "n_points" => {
                self.n_points = Some(value.parse().map_err(|_| {
                    Error::Validation(format!("param n_points: '{value}' is not an integer"))
                })?)
            }
            "sigma_s_grid" => {
                self.sigma_s_grid = Some(value.split(',').map(num).collect::<Result<Vec<_>>>()?)
            }
            "small_phase" => self.small_phase = Some(value.to_string()),
            "large_phase" => self.large_phase = Some(value.to_string()),
            _ => return Err(Error::Validation(format!("unknown param '{key}'"))),
        }
        Ok(())
    }

    fn prior(&self) -> Result<NormalPrior> {
        NormalPrior::new(self.eta.unwrap(), self.sigma2.unwrap())
    }

    fn x_grid(&self) -> Result<Vec<f64>> {
        let (lo, hi, n) = (
            self.x_min.unwrap(),
            self.x_max.unwrap(),
            self.n_points.unwrap(),
        );
        if n < 2 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Validation(format!(
                "grid needs finite x_min < x_max and n_points >= 2, got [{lo}, {hi}] x {n}"
            )));
        }
        let step = hi - lo;
        let last = (n - 1) as f64;
        Ok((0..n)
            .map(|k| {
                if k == n - 1 {
                    hi
                } else {
                    lo + step * k as f64 / last
                }
            })
            .collect())
    }

    fn sigma_grid(&self) -> Result<&[f64]> {
        let g = self.sigma_s_grid.as_deref().unwrap();
        if g.is_empty() || g.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Validation(
                "sigma_s_grid must be a non-empty list of positive values".into(),
            ));
        }
        Ok(g)
    }
}

/// A figure's data: optional text label column followed by numeric columns
/// of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotTable {
    pub figure: FigureId,
    pub params: PlotParams,
    pub labels: Option<(String, Vec<String>)>,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl PlotTable {
    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.1.len())
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        write!(s, "# figure={}", self.figure.as_str()).unwrap();
        for (k, v) in self.params.entries() {
            write!(s, " {k}={v}").unwrap();
        }
        s.push('\n');
        let mut names: Vec<&str> = Vec::new();
        if let Some((n, _)) = &self.labels {
            names.push(n);
        }
        names.extend(self.columns.iter().map(|(n, _)| n.as_str()));
        s.push_str(&names.join("\t"));
        s.push('\n');
        for r in 0..self.n_rows() {
            let mut cells: Vec<String> = Vec::new();
            if let Some((_, l)) = &self.labels {
                cells.push(l[r].clone());
            }
            cells.extend(self.columns.iter().map(|(_, c)| c[r].to_string()));
            s.push_str(&cells.join("\t"));
            s.push('\n');
        }
        s
    }

    pub fn write_tsv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_tsv())?;
        Ok(())
    }

    /// Parses the output of [`PlotTable::to_tsv`]. A leading column named
    /// `label` is read as text.
    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let head = lines
            .next()
            .and_then(|l| l.strip_prefix("# "))
            .ok_or_else(|| Error::Validation("missing '# figure=...' header".into()))?;
        let mut figure = None;
        let mut params = PlotParams::default();
        for tok in head.split(' ') {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::Validation(format!("bad header token '{tok}'")))?;
            if k == "figure" {
                figure = Some(v.parse::<FigureId>()?);
            } else {
                params.set(k, v)?;
            }
        }
        let figure = figure.ok_or_else(|| Error::Validation("header lacks figure".into()))?;
        let names: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::Validation("missing column header".into()))?
            .split('\t')
            .collect();
        let has_labels = names.first() == Some(&"label");
        let offset = has_labels as usize;
        let mut labels = Vec::new();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len() - offset];
        for (i, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split('\t').collect();
            if cells.len() != names.len() {
                return Err(Error::Validation(format!(
                    "row {} has {} cells, expected {}",
                    i + 1,
                    cells.len(),
                    names.len()
                )));
            }
            if has_labels {
                labels.push(cells[0].to_string());
            }
            for (c, cell) in cols.iter_mut().zip(&cells[offset..]) {
                c.push(cell.parse().map_err(|_| {
                    Error::Validation(format!("row {}: '{cell}' is not a number", i + 1))
                })?);
            }
        }
        Ok(PlotTable {
            figure,
            params,
            labels: has_labels.then(|| ("label".to_string(), labels)),
            columns: names[offset..]
                .iter()
                .map(|n| n.to_string())
                .zip(cols)
                .collect(),
        })
    }
}

fn check_token(name: &str, v: &Option<String>) -> Result<()> {
    if let Some(s) = v {
        if s.is_empty() || s.chars().any(|c| c.is_whitespace() || c == '=') {
            return Err(Error::Validation(format!(
                "{name} '{s}' must be non-empty without whitespace or '='"
            )));
        }
    }
    Ok(())
}

/// Builds the table for `figure`. `portfolio` is required for
/// [`FigureId::AdjustCompare`] and ignored otherwise.
pub fn emit_plot_data(
    figure: FigureId,
    params: &PlotParams,
    portfolio: Option<&Portfolio>,
) -> Result<PlotTable> {
    let missing = params.missing_for(figure);
    if !missing.is_empty() {
        return Err(Error::Validation(format!(
            "figure {} is missing params: {}",
            figure.as_str(),
            missing.join(", ")
        )));
    }
    check_token("small_phase", &params.small_phase)?;
    check_token("large_phase", &params.large_phase)?;
    let prior = params.prior()?;
    let mut labels = None;

    let columns = match figure {
        FigureId::Density => {
            let x = params.x_grid()?;
            let mut cols = vec![(
                "theta".to_string(),
                x.iter()
                    .map(|&v| normal::pdf_with(v, prior.eta, prior.sigma2))
                    .collect(),
            )];
            for &sd in params.sigma_grid()? {
                let var = prior.sigma2 + sd * sd;
                cols.push((
                    format!("s_hat[sigma_s={sd}]"),
                    x.iter()
                        .map(|&v| normal::pdf_with(v, prior.eta, var))
                        .collect(),
                ));
            }
            cols.insert(0, ("x".to_string(), x));
            cols
        }
        FigureId::ThresholdVsSigmaS => {
            let x = params.x_grid()?;
            if x[0] <= 0.0 {
                return Err(Error::Validation("sigma_s axis must start above 0".into()));
            }
            let delta = params.delta.unwrap();
            let p = x
                .iter()
                .map(|&sd| conjugate::prob_meet_threshold(&prior, sd, delta))
                .collect::<Result<Vec<_>>>()?;
            vec![("sigma_s".to_string(), x), ("prob".to_string(), p)]
        }
        FigureId::BiasVsS => {
            let x = params.x_grid()?;
            let mut cols = Vec::new();
            for &sd in params.sigma_grid()? {
                // the large-study SD does not enter Δ(s); 1.0 is a placeholder
                let b = x
                    .iter()
                    .map(|&s| conjugate::conditional_prediction(&prior, sd, 1.0, s).map(|c| c.bias))
                    .collect::<Result<Vec<_>>>()?;
                cols.push((format!("bias[sigma_s={sd}]"), b));
            }
            cols.insert(0, ("s".to_string(), x));
            cols
        }
        FigureId::PosVsS => {
            let x = params.x_grid()?;
            let (sigma_l, delta) = (params.sigma_l.unwrap(), params.delta.unwrap());
            let mut cols = Vec::new();
            for &sd in params.sigma_grid()? {
                let p = x
                    .iter()
                    .map(|&s| conjugate::pos_large(&prior, sd, sigma_l, s, delta))
                    .collect::<Result<Vec<_>>>()?;
                cols.push((format!("pos[sigma_s={sd}]"), p));
            }
            cols.insert(0, ("s".to_string(), x));
            cols
        }
        FigureId::AdjustCompare => {
            let portfolio = portfolio.ok_or_else(|| {
                Error::Validation("adjust_compare needs a portfolio input".into())
            })?;
            let (rows, text) = adjust_compare_rows(
                portfolio,
                &prior,
                params.small_phase.as_deref().unwrap(),
                params.large_phase.as_deref().unwrap(),
            )?;
            labels = Some(("label".to_string(), text));
            let names = ["s", "se_s", "adjusted", "large", "se_large", "info_s"];
            names
                .iter()
                .enumerate()
                .map(|(k, n)| (n.to_string(), rows.iter().map(|r| r[k]).collect()))
                .collect()
        }
    };

    Ok(PlotTable {
        figure,
        params: params.clone(),
        labels,
        columns,
    })
}

/// One row per small study of every compound that also has at least one
/// large study; large studies of a compound are pooled by fixed effect.
fn adjust_compare_rows(
    portfolio: &Portfolio,
    prior: &NormalPrior,
    small_phase: &str,
    large_phase: &str,
) -> Result<(Vec<[f64; 6]>, Vec<String>)> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for c in portfolio.compounds() {
        let pick = |phase: &str| -> Vec<(usize, &StudyEstimate)> {
            c.studies
                .iter()
                .enumerate()
                .filter(|(j, _)| c.phase(*j) == Some(phase))
                .collect()
        };
        let small = pick(small_phase);
        let large: Vec<StudyEstimate> = pick(large_phase)
            .into_iter()
            .map(|(_, s)| s.clone())
            .collect();
        if small.is_empty() || large.is_empty() {
            continue;
        }
        let pooled = pool_fixed_effect(&large)?;
        for (j, s) in small {
            let adjusted = conjugate::adjust_estimate(prior, s)?;
            let study = s.label.clone().unwrap_or_else(|| (j + 1).to_string());
            labels.push(format!("{}/{}", c.compound_id, study));
            rows.push([
                s.estimate,
                s.std_error,
                adjusted,
                pooled.estimate,
                pooled.std_error,
                1.0 / s.variance(),
            ]);
        }
    }
    if rows.is_empty() {
        return Err(Error::Validation(format!(
            "no compound has both a '{small_phase}' and a '{large_phase}' study"
        )));
    }
    Ok((rows, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bias_params() -> PlotParams {
        PlotParams {
            eta: Some(-1.0),
            sigma2: Some(1.0),
            sigma_s_grid: Some(vec![0.1, 0.3, 0.5]),
            x_min: Some(-3.0),
            x_max: Some(1.0),
            n_points: Some(41),
            ..Default::default()
        }
    }

    #[test]
    fn bias_zero_at_prior_mean() {
        let t = emit_plot_data(FigureId::BiasVsS, &bias_params(), None).unwrap();
        let s = t.column("s").unwrap();
        let row = s.iter().position(|&v| v == -1.0).expect("grid hits eta");
        for (name, col) in &t.columns[1..] {
            assert_eq!(col[row], 0.0, "{name}");
        }
    }

    #[test]
    fn missing_params_listed() {
        let p = PlotParams {
            eta: Some(0.0),
            ..Default::default()
        };
        let err = emit_plot_data(FigureId::PosVsS, &p, None)
            .unwrap_err()
            .to_string();
        for k in [
            "sigma2",
            "sigma_s_grid",
            "sigma_l",
            "delta",
            "x_min",
            "x_max",
            "n_points",
        ] {
            assert!(err.contains(k), "{err}");
        }
        assert!(!err.contains("eta,"));
    }

    #[test]
    fn tsv_roundtrip() {
        let t = emit_plot_data(FigureId::BiasVsS, &bias_params(), None).unwrap();
        let back = PlotTable::parse_tsv(&t.to_tsv()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn figure_names() {
        for f in FigureId::ALL {
            assert_eq!(f.as_str().parse::<FigureId>().unwrap(), f);
        }
        assert!("fig9".parse::<FigureId>().is_err());
    }
}
