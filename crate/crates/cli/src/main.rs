mod args;
mod report;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::process::ExitCode;

use clap::Parser;
use discount_core::data_io::{
    emit_plot_data, parse_estimates, parse_portfolio_path, pool_fixed_effect_detailed, FigureId,
    PlotParams, PlotTable,
};
use discount_core::prior_fit::{ParamSummary, PointEstimate};
use discount_core::sim::{self, SimConfig};
use discount_core::{
    conditional_prediction, fit_gibbs, fit_gibbs_nested, fit_mle, pos_large, prior_from_fit,
    truncated_selected_mean, Error, FitResult, GibbsSettings, HyperPriors, NormalPrior, PriorMode,
    Result, StudyEstimate, VarianceHyper,
};

use args::{Cli, Command, Figure, Method, Mode};
use report::{FitReport, Lines, ParamReport, PriorValues, Priors, PriorsOnly};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            if stdout
                .write_all(out.as_bytes())
                .and_then(|_| stdout.flush())
                .is_err()
            {
                return ExitCode::from(2);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

/// Sign applied to effect-valued numbers crossing the command line.
#[derive(Clone, Copy)]
struct Sign(bool);

impl Sign {
    fn eff(self, x: f64) -> f64 {
        if self.0 {
            -x
        } else {
            x
        }
    }
}

fn run(cli: &Cli) -> Result<String> {
    let sign = Sign(cli.flipped());
    let mut out = Lines::default();
    let name = match &cli.command {
        Command::Fit(_) => "fit",
        Command::Adjust(_) => "adjust",
        Command::Pos(_) => "pos",
        Command::Simulate(_) => "simulate",
        Command::Pool(_) => "pool",
        Command::PlotData(_) => "plot-data",
    };
    out.text("command", name)
        .text("seed", cli.seed)
        .text("flip_sign", sign.0);

    match &cli.command {
        Command::Fit(a) => fit(a, cli.seed, sign, &mut out)?,
        Command::Adjust(a) => {
            let (prior, small) = adjust_inputs(a, sign)?;
            let cp = conditional_prediction(&prior, small.std_error, 1.0, small.estimate)?;
            out.num("prior_eta", sign.eff(prior.eta))
                .num("prior_sigma2", prior.sigma2)
                .num("estimate", sign.eff(small.estimate))
                .num("stderr", small.std_error)
                .num("shrink_weight", cp.shrink_weight)
                .num("adjusted", sign.eff(cp.cond_mean))
                .num("bias", sign.eff(cp.bias));
        }
        Command::Pos(a) => {
            let (prior, small) = adjust_inputs(&a.adjust, sign)?;
            let delta = sign.eff(a.delta);
            let cp = conditional_prediction(&prior, small.std_error, a.sigma_l, small.estimate)?;
            let pos = pos_large(&prior, small.std_error, a.sigma_l, small.estimate, delta)?;
            out.num("prior_eta", sign.eff(prior.eta))
                .num("prior_sigma2", prior.sigma2)
                .num("estimate", sign.eff(small.estimate))
                .num("stderr", small.std_error)
                .num("sigma_l", a.sigma_l)
                .num("delta", a.delta)
                .num("shrink_weight", cp.shrink_weight)
                .num("cond_mean", sign.eff(cp.cond_mean))
                .num("bias", sign.eff(cp.bias))
                .num("cond_var", cp.cond_var)
                .num("cond_sd", cp.cond_sd())
                .num("pos", pos);
        }
        Command::Simulate(a) => simulate(a, cli.seed, sign, &mut out)?,
        Command::Pool(a) => {
            let mut est = parse_estimates(File::open(&a.input)?)?;
            for e in &mut est {
                e.estimate = sign.eff(e.estimate);
            }
            let p = pool_fixed_effect_detailed(&est)?;
            out.text("n", est.len())
                .num("estimate", sign.eff(p.estimate))
                .num("std_error", p.std_error)
                .num("variance", p.variance)
                .num("total_weight", p.total_weight);
        }
        Command::PlotData(a) => {
            let table = plot(a, sign)?;
            let tsv = table.to_tsv();
            match &a.out {
                Some(path) => {
                    std::fs::write(path, &tsv)?;
                    out.text("figure", table.figure.as_str())
                        .text("rows", table.n_rows())
                        .text("columns", table.columns.len())
                        .text("out", path.display());
                }
                // the table itself is the output
                None => return Ok(tsv),
            }
        }
    }
    Ok(out.render())
}

fn adjust_inputs(a: &args::AdjustArgs, sign: Sign) -> Result<(NormalPrior, StudyEstimate)> {
    let p = &a.prior;
    let (eta, sigma2) = match &p.fit {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let report: PriorsOnly = serde_json::from_str(&text).map_err(|e| {
                Error::Validation(format!("{}: not a fit report: {e}", path.display()))
            })?;
            let chosen = match p.prior_mode {
                Mode::Plugin => report.priors.plugin,
                Mode::Predictive => report.priors.predictive,
            };
            let v = chosen.ok_or_else(|| {
                Error::Domain(format!(
                    "{} has no {:?} prior (fitted sigma2 is 0); try --prior-mode predictive",
                    path.display(),
                    p.prior_mode
                ))
            })?;
            (v.eta, v.sigma2)
        }
        None => (
            p.eta.expect("clap enforces"),
            p.sigma2.expect("clap enforces"),
        ),
    };
    Ok((
        NormalPrior::new(sign.eff(eta), sigma2)?,
        StudyEstimate::new(sign.eff(a.estimate), a.stderr)?,
    ))
}

fn is_effect(name: &str) -> bool {
    name == "eta" || name.starts_with("theta[")
}

fn param_report(
    name: &str,
    s: ParamSummary,
    rhat: Option<f64>,
    ess: f64,
    sign: Sign,
) -> ParamReport {
    let (q05, q95) = if sign.0 && is_effect(name) {
        (-s.q95, -s.q05)
    } else {
        (s.q05, s.q95)
    };
    ParamReport {
        name: name.to_string(),
        mean: if is_effect(name) {
            sign.eff(s.mean)
        } else {
            s.mean
        },
        sd: s.sd,
        q05,
        q95,
        rhat,
        ess,
    }
}

fn fit(a: &args::FitArgs, seed: u64, sign: Sign, out: &mut Lines) -> Result<()> {
    let mut portfolio = parse_portfolio_path(&a.input)?;
    if sign.0 {
        portfolio = portfolio.flipped();
    }
    let hyper = HyperPriors {
        eta_mean: sign.eff(a.eta_mean),
        eta_var: a.eta_var,
        sigma2_shape: a.sigma2_shape,
        sigma2_rate: a.sigma2_rate,
    };
    let settings = GibbsSettings {
        chains: a.chains,
        iters: a.iters,
        burn_in: a.burn_in,
        seed,
    };
    let result: FitResult = match a.method {
        Method::Gibbs => fit_gibbs(&portfolio, &hyper, &settings)?,
        Method::Mle => fit_mle(&portfolio)?,
        Method::GibbsNested => {
            let vh = VarianceHyper {
                shape: a.study_var_shape,
                rate: a.study_var_rate,
            };
            fit_gibbs_nested(&portfolio, &hyper, &vh, &settings)?
        }
    };

    let prior = |mode| {
        prior_from_fit(&result, mode).ok().map(|p| PriorValues {
            eta: sign.eff(p.eta),
            sigma2: p.sigma2,
        })
    };
    let priors = Priors {
        plugin: prior(PriorMode::Plugin),
        predictive: prior(PriorMode::Predictive),
    };
    let params: Vec<ParamReport> = match (&result.draws, &result.diagnostics) {
        (Some(d), Some(diag)) => d
            .names()
            .iter()
            .enumerate()
            .map(|(k, n)| {
                let pd = &diag.params[k];
                param_report(n, d.summary(k), pd.rhat, pd.ess, sign)
            })
            .collect(),
        _ => Vec::new(),
    };
    let sampler = result.method.is_sampler();
    let PointEstimate {
        eta,
        sigma2,
        se_eta,
        se_sigma2,
    } = result.point;
    let report = FitReport {
        method: result.method.as_str().to_string(),
        seed,
        flip_sign: sign.0,
        compounds: portfolio.n_compounds(),
        studies: portfolio.n_studies(),
        chains: sampler.then_some(a.chains),
        iters: sampler.then_some(a.iters),
        burn_in: sampler.then_some(a.burn_in),
        eta: sign.eff(eta),
        sigma2,
        se_eta,
        se_sigma2,
        log_likelihood: result.log_likelihood,
        params,
        warnings: result.warnings.iter().map(ToString::to_string).collect(),
        priors,
    };

    out.text("method", &report.method)
        .text("compounds", report.compounds)
        .text("studies", report.studies);
    if sampler {
        out.text("chains", a.chains)
            .text("iters", a.iters)
            .text("burn_in", a.burn_in);
    }
    out.num("eta", report.eta).num("sigma2", report.sigma2);
    if sampler {
        for p in report.params.iter().take(2) {
            out.num(&format!("{}_sd", p.name), p.sd)
                .num(&format!("{}_q05", p.name), p.q05)
                .num(&format!("{}_q95", p.name), p.q95)
                .opt(&format!("{}_rhat", p.name), p.rhat)
                .num(&format!("{}_ess", p.name), p.ess);
        }
        let diag = result
            .diagnostics
            .as_ref()
            .expect("samplers report diagnostics");
        out.opt("max_rhat", diag.max_rhat())
            .num("min_ess", diag.min_ess());
        let flagged: Vec<&str> = diag.flagged().map(|p| p.name.as_str()).collect();
        out.text(
            "flagged",
            if flagged.is_empty() {
                "none".to_string()
            } else {
                flagged.join(",")
            },
        );
        for n in &diag.notices {
            out.text("notice", n);
        }
    } else {
        out.opt("se_eta", se_eta)
            .opt("se_sigma2", se_sigma2)
            .opt("log_likelihood", report.log_likelihood);
    }
    for (mode, p) in [
        ("plugin", report.priors.plugin),
        ("predictive", report.priors.predictive),
    ] {
        match p {
            Some(v) => out
                .num(&format!("prior_{mode}_eta"), v.eta)
                .num(&format!("prior_{mode}_sigma2"), v.sigma2),
            None => out.text(&format!("prior_{mode}"), "unavailable"),
        };
    }
    for w in &report.warnings {
        out.text("warning", w);
    }
    if let Some(path) = &a.out {
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| Error::Numerical(format!("cannot serialize fit report: {e}")))?;
        std::fs::write(path, json + "\n")?;
        out.text("report", path.display());
    }
    Ok(())
}

fn simulate(a: &args::SimulateArgs, seed: u64, sign: Sign, out: &mut Lines) -> Result<()> {
    let config = SimConfig {
        prior: NormalPrior::new(sign.eff(a.eta), a.sigma2)?,
        sigma_s: a.sigma_s,
        sigma_l: a.sigma_l,
        n_draws: a.n,
        delta: a.delta.map(|d| sign.eff(d)),
        seed,
    };
    let adjust_prior = match (a.adjust_eta, a.adjust_sigma2) {
        (Some(e), Some(s2)) => NormalPrior::new(sign.eff(e), s2)?,
        _ => config.prior,
    };
    let s = sim::simulate_with_adjustment(&config, &adjust_prior)?;

    out.text("n_draws", s.n_draws);
    for (key, m) in [
        ("theta", s.theta),
        ("s_hat", s.s_hat),
        ("l_hat", s.l_hat),
        ("adjusted", s.adjusted),
    ] {
        out.num(&format!("mean_{key}"), sign.eff(m.mean))
            .num(&format!("se_mean_{key}"), m.se);
    }
    out.num("var_theta", s.var_theta)
        .num("var_s_hat", s.var_s_hat)
        .num("var_l_hat", s.var_l_hat)
        .num("var_gap", s.var_gap.mean)
        .num("se_var_gap", s.var_gap.se)
        .num("corr_s_l", s.corr_s_l);
    if let Some(sel) = &s.selection {
        out.num("delta", sign.eff(sel.delta))
            .text("selected_count", sel.count)
            .num("selected_fraction", sel.fraction);
        for (key, m) in [
            ("s_hat", sel.s_hat),
            ("theta", sel.theta),
            ("l_hat", sel.l_hat),
            ("adjusted", sel.adjusted),
        ] {
            out.num(&format!("selected_mean_{key}"), sign.eff(m.mean))
                .num(&format!("se_selected_mean_{key}"), m.se);
        }
        if let Ok(m) = truncated_selected_mean(&config.prior, config.sigma_s, sel.delta) {
            out.num("analytic_selected_mean_s_hat", sign.eff(m));
        }
    }
    if let Some(path) = &a.triples_out {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "theta,s_hat,l_hat")?;
        let mut err = None;
        sim::for_each_triple(&config, |t| {
            if err.is_none() {
                let (x, y, z) = (sign.eff(t.theta), sign.eff(t.s_hat), sign.eff(t.l_hat));
                if let Err(e) = writeln!(w, "{x},{y},{z}") {
                    err = Some(e);
                }
            }
        })?;
        if let Some(e) = err {
            return Err(e.into());
        }
        w.flush()?;
        out.text("triples", path.display());
    }
    Ok(())
}

fn figure_id(f: Figure) -> FigureId {
    match f {
        Figure::Density => FigureId::Density,
        Figure::ThresholdVsSigmaS => FigureId::ThresholdVsSigmaS,
        Figure::BiasVsS => FigureId::BiasVsS,
        Figure::PosVsS => FigureId::PosVsS,
        Figure::AdjustCompare => FigureId::AdjustCompare,
    }
}

/// Builds the table in the caller's sign convention. With --flip-sign the
/// internal table is computed on negated inputs, then effect columns are
/// negated back and effect-axis rows reversed so the axis stays ascending.
fn plot(a: &args::PlotArgs, sign: Sign) -> Result<PlotTable> {
    let figure = figure_id(a.figure);
    let user = PlotParams {
        eta: a.eta,
        sigma2: a.sigma2,
        sigma_s_grid: a.sigma_s_grid.clone(),
        sigma_l: a.sigma_l,
        delta: a.delta,
        x_min: a.x_min,
        x_max: a.x_max,
        n_points: a.n_points,
        small_phase: a.small_phase.clone(),
        large_phase: a.large_phase.clone(),
    };
    let portfolio = match (&a.input, figure) {
        (Some(path), FigureId::AdjustCompare) => {
            let p = parse_portfolio_path(path)?;
            Some(if sign.0 { p.flipped() } else { p })
        }
        (None, _) | (Some(_), _) => None,
    };
    let effect_axis = matches!(
        figure,
        FigureId::Density | FigureId::BiasVsS | FigureId::PosVsS
    );
    let mut internal = user.clone();
    if sign.0 {
        internal.eta = user.eta.map(|v| -v);
        internal.delta = user.delta.map(|v| -v);
        if effect_axis {
            internal.x_min = user.x_max.map(|v| -v);
            internal.x_max = user.x_min.map(|v| -v);
        }
    }
    let mut table = emit_plot_data(figure, &internal, portfolio.as_ref())?;
    if sign.0 {
        for (name, col) in &mut table.columns {
            let negate = match figure {
                FigureId::Density => name == "x",
                FigureId::BiasVsS => true,
                FigureId::PosVsS => name == "s",
                FigureId::ThresholdVsSigmaS => false,
                FigureId::AdjustCompare => ["s", "adjusted", "large"].contains(&name.as_str()),
            };
            if negate {
                col.iter_mut().for_each(|v| *v = -*v);
            }
            if effect_axis {
                col.reverse();
            }
        }
    }
    table.params = user;
    Ok(table)
}
