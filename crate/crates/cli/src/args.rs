use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Discount early-study treatment effects for selection bias.
///
/// Effects follow the "smaller is better" convention; pass --flip-sign when
/// larger values are better. Commands print `key: value` lines, except
/// plot-data, which writes TSV.
#[derive(Debug, Parser)]
#[command(name = "discount", version)]
pub struct Cli {
    /// Master random seed; echoed in every report.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Negate effect-valued inputs and outputs (estimates, eta, delta,
    /// means). Given twice it cancels out.
    #[arg(long, global = true, action = clap::ArgAction::Count)]
    pub flip_sign: u8,

    #[command(subcommand)]
    pub command: Command,
}

impl Cli {
    pub fn flipped(&self) -> bool {
        self.flip_sign % 2 == 1
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the portfolio prior N(eta, sigma2) from a study CSV.
    Fit(FitArgs),
    /// Shrink an early estimate toward the portfolio prior.
    Adjust(AdjustArgs),
    /// Probability that the large study meets the threshold.
    Pos(PosArgs),
    /// Monte Carlo of the two-stage model.
    Simulate(SimulateArgs),
    /// Fixed-effect pooling of estimates from a CSV.
    Pool(PoolArgs),
    /// Emit a figure's data table as TSV.
    PlotData(PlotArgs),
}

pub fn finite(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("'{s}' is not finite"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Gibbs,
    Mle,
    GibbsNested,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Plugin,
    Predictive,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct FitArgs {
    /// Portfolio CSV: compound_id,study_id,phase,estimate,std_error
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Gibbs)]
    pub method: Method,
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    #[arg(long, default_value_t = 5000)]
    pub iters: usize,
    #[arg(long, default_value_t = 2500)]
    pub burn_in: usize,
    /// Write a JSON fit report here (readable by `adjust --fit`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = finite, default_value_t = 0.0)]
    pub eta_mean: f64,
    #[arg(long, value_parser = finite, default_value_t = 1000.0)]
    pub eta_var: f64,
    #[arg(long, value_parser = finite, default_value_t = 0.001)]
    pub sigma2_shape: f64,
    #[arg(long, value_parser = finite, default_value_t = 0.001)]
    pub sigma2_rate: f64,
    /// Inverse-gamma shape of the per-compound study variance (gibbs-nested).
    #[arg(long, value_parser = finite, default_value_t = 3.0)]
    pub study_var_shape: f64,
    #[arg(long, value_parser = finite, default_value_t = 0.02)]
    pub study_var_rate: f64,
}

/// Where the prior comes from: explicit values or a fit report.
#[derive(Debug, Args)]
pub struct PriorArgs {
    #[arg(long, value_parser = finite, required_unless_present = "fit", conflicts_with = "fit")]
    pub eta: Option<f64>,
    #[arg(long, value_parser = finite, required_unless_present = "fit", conflicts_with = "fit")]
    pub sigma2: Option<f64>,
    /// JSON report written by `fit --out`.
    #[arg(long)]
    pub fit: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Plugin, requires = "fit")]
    pub prior_mode: Mode,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct AdjustArgs {
    #[command(flatten)]
    pub prior: PriorArgs,
    /// Early (small) study estimate.
    #[arg(long, value_parser = finite)]
    pub estimate: f64,
    /// Its standard error.
    #[arg(long, value_parser = finite)]
    pub stderr: f64,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct PosArgs {
    #[command(flatten)]
    pub adjust: AdjustArgs,
    /// Standard error of the large study.
    #[arg(long, value_parser = finite)]
    pub sigma_l: f64,
    /// Success threshold for the large study.
    #[arg(long, value_parser = finite)]
    pub delta: f64,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct SimulateArgs {
    #[arg(long, value_parser = finite)]
    pub eta: f64,
    #[arg(long, value_parser = finite)]
    pub sigma2: f64,
    #[arg(long, value_parser = finite)]
    pub sigma_s: f64,
    #[arg(long, value_parser = finite)]
    pub sigma_l: f64,
    /// Number of simulated compounds.
    #[arg(long)]
    pub n: u64,
    /// Selection threshold on the small-study estimate.
    #[arg(long, value_parser = finite)]
    pub delta: Option<f64>,
    /// Prior used for the adjusted estimates (defaults to the true one).
    #[arg(long, value_parser = finite, requires = "adjust_sigma2")]
    pub adjust_eta: Option<f64>,
    #[arg(long, value_parser = finite, requires = "adjust_eta")]
    pub adjust_sigma2: Option<f64>,
    /// Also write every draw as CSV (theta,s_hat,l_hat).
    #[arg(long)]
    pub triples_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PoolArgs {
    /// CSV with `estimate` and `std_error` columns.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Figure {
    Density,
    ThresholdVsSigmaS,
    BiasVsS,
    PosVsS,
    AdjustCompare,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct PlotArgs {
    #[arg(long, value_enum)]
    pub figure: Figure,
    #[arg(long, value_parser = finite)]
    pub eta: Option<f64>,
    #[arg(long, value_parser = finite)]
    pub sigma2: Option<f64>,
    /// Comma-separated small-study standard errors.
    #[arg(long, value_delimiter = ',', value_parser = finite)]
    pub sigma_s_grid: Option<Vec<f64>>,
    #[arg(long, value_parser = finite)]
    pub sigma_l: Option<f64>,
    #[arg(long, value_parser = finite)]
    pub delta: Option<f64>,
    #[arg(long, value_parser = finite)]
    pub x_min: Option<f64>,
    #[arg(long, value_parser = finite)]
    pub x_max: Option<f64>,
    #[arg(long)]
    pub n_points: Option<usize>,
    #[arg(long)]
    pub small_phase: Option<String>,
    #[arg(long)]
    pub large_phase: Option<String>,
    /// Portfolio CSV (adjust_compare only).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Write the TSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
