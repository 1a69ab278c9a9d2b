use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use discount_core::rng;
use discount_core::sim::PortfolioGenerator;
use discount_core::{
    fit_gibbs, fit_gibbs_nested, fit_mle, GibbsSettings, HyperPriors, VarianceHyper,
};

fn fitters(c: &mut Criterion) {
    let generator = PortfolioGenerator {
        eta: -1.0,
        sigma2: 0.25,
        n_compounds: 200,
        studies_per_compound: 2,
        std_error: 0.1,
    };
    let portfolio = generator.generate(&mut rng::stream(1, 0)).unwrap();
    let settings = GibbsSettings::default();
    let hyper = HyperPriors::default();

    let mut group = c.benchmark_group("prior_fit");
    group.sample_size(10);
    group.bench_function("gibbs 4x5000 I=200", |b| {
        b.iter(|| fit_gibbs(black_box(&portfolio), &hyper, &settings))
    });
    group.bench_function("gibbs_nested 4x5000 I=200", |b| {
        b.iter(|| {
            fit_gibbs_nested(
                black_box(&portfolio),
                &hyper,
                &VarianceHyper::default(),
                &settings,
            )
        })
    });
    group.bench_function("mle I=200", |b| b.iter(|| fit_mle(black_box(&portfolio))));
    group.finish();
}

criterion_group!(benches, fitters);
criterion_main!(benches);
