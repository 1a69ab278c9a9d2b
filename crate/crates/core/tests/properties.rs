use discount_core::data_io::{parse_portfolio, pool_fixed_effect_detailed, write_portfolio};
use discount_core::{
    adjust_estimate, conditional_prediction, pos_large, NormalPrior, Portfolio, StudyEstimate,
};
use proptest::prelude::*;

fn prior() -> impl Strategy<Value = NormalPrior> {
    (-5.0..5.0f64, 1e-3..10.0f64).prop_map(|(eta, s2)| NormalPrior::new(eta, s2).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 512,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn adjustment_shrinks_toward_prior_mean(p in prior(), s in -10.0..10.0f64, sd in 1e-3..5.0f64) {
        let a = adjust_estimate(&p, &StudyEstimate::new(s, sd).unwrap()).unwrap();
        prop_assert!((a - p.eta).abs() <= (s - p.eta).abs());
        if s != p.eta {
            prop_assert!((a - p.eta).abs() < (s - p.eta).abs());
        }
    }

    #[test]
    fn bias_is_affine_with_fixed_slope(p in prior(), sd in 1e-2..5.0f64, s1 in -8.0..8.0f64, gap in 0.1..4.0f64) {
        let s2 = s1 + gap;
        let b1 = conditional_prediction(&p, sd, 1.0, s1).unwrap().bias;
        let b2 = conditional_prediction(&p, sd, 1.0, s2).unwrap().bias;
        let slope = -sd * sd / (sd * sd + p.sigma2);
        prop_assert!(((b2 - b1) / gap - slope).abs() < 1e-9);
    }

    #[test]
    fn promising_results_are_discounted(p in prior(), sd in 1e-2..5.0f64, below in 1e-3..6.0f64) {
        let c = conditional_prediction(&p, sd, 0.5, p.eta - below).unwrap();
        prop_assert!(c.bias > 0.0);
        prop_assert_eq!(c.bias, c.cond_mean - (p.eta - below));
    }

    #[test]
    fn conditioning_reduces_variance(p in prior(), sd in 1e-2..5.0f64, sl in 1e-2..5.0f64, s in -5.0..5.0f64) {
        let c = conditional_prediction(&p, sd, sl, s).unwrap();
        prop_assert!(c.cond_var < sl * sl + p.sigma2);
        prop_assert!(c.cond_var > sl * sl);
        prop_assert!(c.shrink_weight > 0.0 && c.shrink_weight <= 1.0);
    }

    #[test]
    fn pos_falls_with_noisier_small_study(
        p in prior(),
        lo in 0.05..1.0f64,
        extra in 0.05..1.0f64,
        sl in 0.05..1.0f64,
        below in 0.0..5.0f64,
        gap in 1e-3..3.0f64,
    ) {
        // Claimed only for promising results (s <= eta) whose conditional
        // means sit below the threshold; see `pos_can_rise_above_prior_mean`.
        let (hi, s) = (lo + extra, p.eta - below);
        let a = conditional_prediction(&p, lo, sl, s).unwrap();
        let b = conditional_prediction(&p, hi, sl, s).unwrap();
        let delta = a.cond_mean.max(b.cond_mean) + gap;
        let pa = pos_large(&p, lo, sl, s, delta).unwrap();
        let pb = pos_large(&p, hi, sl, s, delta).unwrap();
        prop_assert!(pb <= pa, "{pb} > {pa}");
    }

    #[test]
    fn pooling_is_order_and_duplication_invariant(
        rows in prop::collection::vec((-3.0..3.0f64, 0.01..2.0f64), 1..12),
        seed in any::<u64>(),
    ) {
        let est: Vec<StudyEstimate> =
            rows.iter().map(|&(e, s)| StudyEstimate::new(e, s).unwrap()).collect();
        let base = pool_fixed_effect_detailed(&est).unwrap();

        let mut shuffled = est.clone();
        let n = shuffled.len();
        let mut k = seed;
        for i in (1..n).rev() {
            k = k.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (k >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(pool_fixed_effect_detailed(&shuffled).unwrap(), base);

        let doubled: Vec<StudyEstimate> = est.iter().chain(est.iter()).cloned().collect();
        let d = pool_fixed_effect_detailed(&doubled).unwrap();
        prop_assert_eq!(d.estimate, base.estimate);
        prop_assert_eq!(d.variance * 2.0, base.variance);
    }

    #[test]
    fn csv_round_trip(
        compounds in prop::collection::vec(
            prop::collection::vec((-1e3..1e3f64, 1e-6..1e3f64, 1u8..4), 1..4),
            1..6,
        ),
    ) {
        let rows: Vec<(String, Vec<(f64, f64)>)> = compounds
            .iter()
            .enumerate()
            .map(|(i, studies)| (format!("cmp{i}"), studies.iter().map(|&(e, s, _)| (e, s)).collect()))
            .collect();
        let mut portfolio = Portfolio::from_estimates(rows).unwrap();
        // the file always carries a study id and a phase
        let mut records = portfolio.compounds().to_vec();
        for (rec, src) in records.iter_mut().zip(&compounds) {
            rec.phases = src.iter().map(|&(_, _, ph)| ph.to_string()).collect();
            for (j, st) in rec.studies.iter_mut().enumerate() {
                st.label = Some(format!("st{j}"));
            }
        }
        portfolio = Portfolio::new(records).unwrap();

        let mut buf = Vec::new();
        write_portfolio(&portfolio, &mut buf).unwrap();
        let back = parse_portfolio(buf.as_slice()).unwrap();
        prop_assert_eq!(&back, &portfolio);

        let mut again = Vec::new();
        write_portfolio(&back, &mut again).unwrap();
        prop_assert_eq!(again, buf);
    }
}

/// Above the prior mean a noisier early study pulls the prediction down
/// toward eta, so PoS can rise with sigma_s even when both conditional
/// means are below delta.
#[test]
fn pos_can_rise_above_prior_mean() {
    let p = NormalPrior::new(0.0, 0.001).unwrap();
    let (sl, s, delta) = (0.68, 2.47, 3.32);
    for sd in [0.05, 0.1] {
        assert!(conditional_prediction(&p, sd, sl, s).unwrap().cond_mean < delta);
    }
    let lo = pos_large(&p, 0.05, sl, s, delta).unwrap();
    let hi = pos_large(&p, 0.1, sl, s, delta).unwrap();
    assert!(hi > lo);
}
