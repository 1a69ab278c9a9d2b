use discount_core::sim::{
    self, for_each_triple, mc_conditional_oracle, selection_experiment, write_triples, SimConfig,
    MAX_DRAWS,
};
use discount_core::{adjust_estimate, Error, NormalPrior, StudyEstimate};

fn base(n: u64, delta: Option<f64>, seed: u64) -> SimConfig {
    SimConfig {
        prior: NormalPrior::new(-1.0, 1.0).unwrap(),
        sigma_s: 0.5,
        sigma_l: 0.3,
        n_draws: n,
        delta,
        seed,
    }
}

/// Normal-theory SE of a sample variance.
fn var_se(var: f64, n: u64) -> f64 {
    var * (2.0 / (n as f64 - 1.0)).sqrt()
}

#[test]
fn marginal_variances_reference() {
    let n = 1_000_000;
    let s = sim::simulate(&base(n, None, 21)).unwrap();
    assert!(
        (s.var_s_hat - 1.25).abs() <= 3.0 * var_se(1.25, n),
        "{}",
        s.var_s_hat
    );
    assert!(
        (s.var_theta - 1.0).abs() <= 3.0 * var_se(1.0, n),
        "{}",
        s.var_theta
    );
    assert!(
        (s.var_l_hat - 1.09).abs() <= 3.0 * var_se(1.09, n),
        "{}",
        s.var_l_hat
    );
    assert!(s.var_s_hat > s.var_theta);
}

#[test]
fn law_of_total_variance_and_unbiasedness() {
    let s = sim::simulate(&base(1_000_000, None, 22)).unwrap();
    assert!(s.var_gap.within(0.25, 3.0), "{:?}", s.var_gap);
    assert!(s.s_hat.within(-1.0, 3.0), "{:?}", s.s_hat);
    assert!(s.l_hat.within(-1.0, 3.0));
    assert!(s.theta.within(-1.0, 3.0));
    // E[E(large | small)] = eta when the adjustment uses the true prior
    assert!(s.adjusted.within(-1.0, 3.0), "{:?}", s.adjusted);
}

#[test]
fn exact_studies_are_perfectly_correlated() {
    let mut c = base(100_000, None, 23);
    c.sigma_s = 1e-6;
    c.sigma_l = 1e-6;
    let s = sim::simulate(&c).unwrap();
    assert!(s.corr_s_l > 1.0 - 1e-9, "{}", s.corr_s_l);
}

#[test]
fn selected_small_estimates_overstate() {
    let s = sim::simulate(&base(1_000_000, Some(-1.5), 24)).unwrap();
    let sel = s.selection.unwrap();
    assert!(
        sel.s_hat.within(-2.2328477614026945, 3.0),
        "{:?}",
        sel.s_hat
    );
    assert!(sel.s_hat.mean < sel.l_hat.mean);
    assert!(sel.fraction > 0.0 && sel.fraction < 1.0);
}

#[test]
fn per_draw_adjustment_identity() {
    let c = base(50_000, None, 25);
    let prior = c.prior;
    let w = prior.sigma2 / (c.sigma_s * c.sigma_s + prior.sigma2);
    let mut sum = 0.0;
    for_each_triple(&c, |t| {
        let a = adjust_estimate(&prior, &StudyEstimate::new(t.s_hat, c.sigma_s).unwrap()).unwrap();
        assert_eq!(a, prior.eta + w * (t.s_hat - prior.eta));
        sum += a;
    })
    .unwrap();
    let summary = sim::simulate(&c).unwrap();
    assert!((sum / 50_000.0 - summary.adjusted.mean).abs() < 1e-12);
}

#[test]
fn conditionally_independent_given_theta() {
    let c = base(10_000_000, None, 26);
    let (mut n, mut ss, mut sl, mut sss, mut sll, mut ssl) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for_each_triple(&c, |t| {
        if (t.theta + 1.0).abs() <= 0.005 {
            n += 1.0;
            ss += t.s_hat;
            sl += t.l_hat;
            sss += t.s_hat * t.s_hat;
            sll += t.l_hat * t.l_hat;
            ssl += t.s_hat * t.l_hat;
        }
    })
    .unwrap();
    let cov = ssl / n - ss * sl / (n * n);
    let corr = cov / ((sss / n - (ss / n).powi(2)) * (sll / n - (sl / n).powi(2))).sqrt();
    assert!(n > 10_000.0);
    assert!(corr.abs() <= 3.0 / n.sqrt(), "corr {corr} over {n} draws");
}

#[test]
fn summaries_are_reproducible_across_thread_counts() {
    let c = base(300_000, Some(-1.5), 27);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sim::simulate(&c).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, sim::simulate(&c).unwrap());
    let other = sim::simulate(&SimConfig { seed: 28, ..c }).unwrap();
    assert_ne!(one, other);
}

#[test]
fn triples_stream_matches_iteration() {
    let c = base(1000, None, 29);
    let mut a = Vec::new();
    write_triples(&c, &mut a).unwrap();
    let mut b = Vec::new();
    write_triples(&c, &mut b).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("theta,s_hat,l_hat"));
    let mut first = None;
    for_each_triple(&c, |t| {
        first.get_or_insert(t);
    })
    .unwrap();
    let t = first.unwrap();
    assert_eq!(
        lines.next().unwrap(),
        format!("{},{},{}", t.theta, t.s_hat, t.l_hat)
    );
    assert_eq!(text.lines().count(), 1001);
}

#[test]
fn invalid_configs() {
    assert!(matches!(
        sim::simulate(&base(0, None, 1)),
        Err(Error::Validation(_))
    ));
    assert!(sim::simulate(&base(MAX_DRAWS + 1, None, 1)).is_err());
    let mut c = base(10, None, 1);
    c.sigma_l = 0.0;
    assert!(matches!(sim::simulate(&c), Err(Error::Domain(_))));
}

#[test]
fn oracle_with_vacuous_window_is_unconditional() {
    let o = mc_conditional_oracle(&base(1_000_000, None, 30), -1.0, 1e3).unwrap();
    assert_eq!(o.n_in_window, 1_000_000);
    assert!(o.cond_mean.within(-1.0, 3.0), "{:?}", o.cond_mean);
    assert!(o.pos.is_none());
}

#[test]
fn oracle_refuses_far_tail() {
    let tau = 1.25f64.sqrt();
    match mc_conditional_oracle(&base(10_000_000, None, 31), -1.0 - 8.0 * tau, 0.01) {
        Err(Error::InsufficientSample {
            found, required, ..
        }) => assert!(found < required),
        other => panic!("{other:?}"),
    }
}

#[test]
fn selection_experiment_reference() {
    let c = base(1_000_000, Some(-1.5), 32);
    let r = selection_experiment(&c, &c.prior).unwrap();
    assert!(r.adjusted_matches_theta);
    assert!(r.theta_matches_large);
    assert_eq!(r.naive_biased, Some(true));
    assert!(r.selection.s_hat.within(r.analytic_selected_mean, 3.0));
    assert!((r.analytic_selected_mean + 2.2328477614026945).abs() < 1e-12);
    assert!(r.unconditional_adjusted.within(-1.0, 3.0));
    for (a, b) in [
        (r.selection.adjusted, r.selection.theta),
        (r.selection.theta, r.selection.l_hat),
    ] {
        let se = (a.se * a.se + b.se * b.se).sqrt();
        assert!((a.mean - b.mean).abs() <= 3.0 * se);
    }
}

#[test]
fn selection_experiment_wrong_prior_is_caught() {
    let c = base(1_000_000, Some(-1.5), 33);
    let wrong = NormalPrior::new(0.0, 1.0).unwrap();
    let r = selection_experiment(&c, &wrong).unwrap();
    assert!(
        !r.adjusted_matches_theta,
        "{:?}",
        r.selection.adjusted_minus_theta
    );
}

#[test]
fn selection_without_real_threshold() {
    let c = base(1_000_000, Some(1e6), 34);
    let r = selection_experiment(&c, &c.prior).unwrap();
    assert_eq!(r.selection.count, 1_000_000);
    assert!(r.selection.s_hat.within(-1.0, 3.0));
    assert_eq!(r.naive_biased, None);
    assert!(r.analytic_truncation_bias.abs() < 1e-12);
}

#[test]
fn selection_needs_delta_and_mass() {
    assert!(selection_experiment(&base(1000, None, 1), &base(1, None, 1).prior).is_err());
    let c = base(100_000, Some(-12.0), 35);
    assert!(matches!(
        selection_experiment(&c, &c.prior),
        Err(Error::DegenerateSelection { .. })
    ));
}
