use discount_core::prior_fit::{diagnostics, Draws, ParamSummary, RHAT_THRESHOLD};
use discount_core::rng;
use discount_core::sim::PortfolioGenerator;
use discount_core::{
    fit_gibbs, fit_gibbs_nested, CompoundRecord, FitResult, FitWarning, GibbsSettings, HyperPriors,
    Portfolio, StudyEstimate, VarianceHyper,
};
use rand_distr::{Distribution, StandardNormal};

fn generate(eta: f64, sigma2: f64, n: usize, m: usize, se: f64, seed: u64) -> Portfolio {
    PortfolioGenerator {
        eta,
        sigma2,
        n_compounds: n,
        studies_per_compound: m,
        std_error: se,
    }
    .generate(&mut rng::stream(seed, 0))
    .unwrap()
}

fn mcse(fit: &FitResult, name: &str) -> f64 {
    let s = fit.summary(name).unwrap();
    s.sd / fit
        .diagnostics
        .as_ref()
        .unwrap()
        .get(name)
        .unwrap()
        .ess
        .sqrt()
}

fn pooled(fit: &FitResult, prefix: &str) -> Vec<f64> {
    let d = fit.draws.as_ref().unwrap();
    d.names()
        .iter()
        .enumerate()
        .filter(|(_, n)| n.starts_with(prefix))
        .flat_map(|(k, _)| d.pooled(k))
        .collect()
}

#[test]
fn single_study_compounds_keep_their_prior() {
    let p = generate(0.0, 0.1, 40, 1, 0.1, 301);
    let vh = VarianceHyper::default();
    let fit =
        fit_gibbs_nested(&p, &HyperPriors::default(), &vh, &GibbsSettings::default()).unwrap();
    assert!(fit.has_warning(
        |w| matches!(w, FitWarning::SingleStudyCompounds { compound_ids } if compound_ids.len() == 40)
    ));

    let mut post = pooled(&fit, "sigma_i2[");
    post.sort_by(f64::total_cmp);
    let mut r = rng::stream(302, 0);
    let mut prior: Vec<f64> = (0..post.len())
        .map(|_| rng::inverse_gamma(&mut r, vh.shape, vh.rate).unwrap())
        .collect();
    prior.sort_by(f64::total_cmp);
    for q in [0.1, 0.25, 0.5, 0.75, 0.9] {
        let a = discount_core::prior_fit::quantile_sorted(&post, q);
        let b = discount_core::prior_fit::quantile_sorted(&prior, q);
        assert!((a / b - 1.0).abs() < 0.15, "q{q}: posterior {a}, prior {b}");
    }
}

#[test]
fn vanishing_study_variance_collapses_to_two_level_fit() {
    let p = generate(0.5, 0.2, 30, 3, 0.2, 303);
    let s = GibbsSettings::default();
    let flat = fit_gibbs(&p, &HyperPriors::default(), &s).unwrap();
    // prior mass of σ_i² sits near 1e-8
    let tiny = VarianceHyper {
        shape: 1000.0,
        rate: 1e-5,
    };
    let nested = fit_gibbs_nested(&p, &HyperPriors::default(), &tiny, &s).unwrap();
    for name in ["eta", "sigma2"] {
        let a = flat.summary(name).unwrap().mean;
        let b = nested.summary(name).unwrap().mean;
        let tol = 3.0 * (mcse(&flat, name).powi(2) + mcse(&nested, name).powi(2)).sqrt();
        assert!((a - b).abs() <= tol, "{name}: {a} vs {b} (tol {tol})");
    }
}

#[test]
fn recovers_known_study_variance() {
    let (eta, sigma2, sigma_i2, se): (f64, f64, f64, f64) = (-0.5, 0.25, 0.04, 0.05);
    let mut r = rng::stream(304, 0);
    let z = |r: &mut rng::StreamRng| -> f64 { StandardNormal.sample(r) };
    let compounds = (0..100)
        .map(|i| {
            let theta = eta + sigma2.sqrt() * z(&mut r);
            let studies = (0..5)
                .map(|j| {
                    let tij = theta + sigma_i2.sqrt() * z(&mut r);
                    StudyEstimate::new(tij + se * z(&mut r), se)
                        .unwrap()
                        .with_label(format!("s{j}"))
                })
                .collect();
            CompoundRecord::new(format!("c{i}"), studies)
        })
        .collect();
    let p = Portfolio::new(compounds).unwrap();
    let fit = fit_gibbs_nested(
        &p,
        &HyperPriors::default(),
        &VarianceHyper {
            shape: 0.001,
            rate: 0.001,
        },
        &GibbsSettings::default(),
    )
    .unwrap();

    let d = fit.draws.as_ref().unwrap();
    let per: Vec<ParamSummary> = (0..100)
        .map(|i| d.summary(d.index_of(&format!("sigma_i2[c{i}]")).unwrap()))
        .collect();
    let avg_mean = per.iter().map(|s| s.mean).sum::<f64>() / 100.0;
    let avg_sd = per.iter().map(|s| s.sd).sum::<f64>() / 100.0;
    assert!(
        (avg_mean - sigma_i2).abs() <= 3.0 * avg_sd,
        "mean {avg_mean}, sd {avg_sd}"
    );
    let inside = per
        .iter()
        .filter(|s| (s.mean - sigma_i2).abs() <= 3.0 * s.sd)
        .count();
    assert!(inside >= 95, "{inside}/100 compounds within 3 posterior SD");
}

#[test]
fn nested_is_bit_reproducible() {
    let p = generate(0.1, 0.1, 10, 2, 0.2, 305);
    let s = GibbsSettings {
        chains: 2,
        iters: 300,
        burn_in: 100,
        seed: 3,
    };
    let vh = VarianceHyper::default();
    assert_eq!(
        fit_gibbs_nested(&p, &HyperPriors::default(), &vh, &s).unwrap(),
        fit_gibbs_nested(&p, &HyperPriors::default(), &vh, &s).unwrap()
    );
}

#[test]
fn duplicated_chain_gives_unit_rhat() {
    let p = generate(-1.0, 0.25, 20, 1, 0.1, 306);
    let one = GibbsSettings {
        chains: 1,
        ..GibbsSettings::default()
    };
    let fit = fit_gibbs(&p, &HyperPriors::default(), &one).unwrap();
    let d = fit.draws.as_ref().unwrap();
    assert!(fit.diagnostics.as_ref().unwrap().params[0].rhat.is_none());
    assert!(!fit.diagnostics.as_ref().unwrap().notices.is_empty());

    let chain = d.raw_chain(0).to_vec();
    let twin = Draws::new(d.names().to_vec(), vec![chain.clone(), chain]).unwrap();
    let report = diagnostics(&twin);
    for p in &report.params {
        let r = p.rhat.unwrap();
        assert!((r - 1.0).abs() < 0.01, "{}: {r}", p.name);
    }
}

#[test]
fn constant_chains_give_exactly_one() {
    let rows: Vec<f64> = std::iter::repeat_n([0.2, 0.1], 100).flatten().collect();
    let d = Draws::new(
        vec!["eta".into(), "sigma2".into()],
        vec![rows.clone(), rows],
    )
    .unwrap();
    for p in diagnostics(&d).params {
        assert_eq!(p.rhat, Some(1.0));
    }
}

#[test]
fn well_mixed_fit_passes() {
    let p = generate(-1.0, 0.25, 50, 1, 0.1, 307);
    let fit = fit_gibbs(&p, &HyperPriors::default(), &GibbsSettings::default()).unwrap();
    let rep = fit.diagnostics.as_ref().unwrap();
    let worst = rep.max_rhat().unwrap();
    assert!(worst < RHAT_THRESHOLD, "max R-hat {worst}");
    assert!(rep.params.iter().all(|p| !p.rhat_flag));
}

#[test]
fn short_run_raises_rhat_flag() {
    let p = generate(-1.0, 0.25, 50, 1, 0.1, 308);
    let short = GibbsSettings {
        chains: 4,
        iters: 20,
        burn_in: 10,
        seed: 42,
    };
    let fit = fit_gibbs(&p, &HyperPriors::default(), &short).unwrap();
    let rep = fit.diagnostics.as_ref().unwrap();
    assert!(rep.any_flag());
    assert!(
        rep.params.iter().any(|p| p.rhat_flag),
        "max R-hat {:?}",
        rep.max_rhat()
    );
}
