use proptest::prelude::*;
use ts_estimate::{
    sample_prior, sample_weibull, weibull_cdf, weibull_pdf, weibull_quantile, PriorKind, PriorSpec, SeedSpec,
    WeibullParams,
};

fn params(eta: f64, gamma: f64) -> WeibullParams {
    WeibullParams::new(eta, gamma).unwrap()
}

/// Composite Simpson on `[0, upper]`.
fn simpson(f: impl Fn(f64) -> f64, upper: f64, intervals: usize) -> f64 {
    let h = upper / intervals as f64;
    let mut sum = f(0.0) + f(upper);
    for k in 1..intervals {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(k as f64 * h);
    }
    sum * h / 3.0
}

#[test]
fn pdf_integrates_to_cdf() {
    for (eta, gamma) in [(1.0, 1.0), (2.0, 2.0), (8.0, 8.0), (4.0, 1.5)] {
        let p = params(eta, gamma);
        let upper = weibull_quantile(0.999, &p).unwrap();
        let area = simpson(|x| weibull_pdf(x, &p).unwrap(), upper, 20_000);
        assert!((area - 0.999).abs() < 1e-6, "({eta}, {gamma}): {area}");
    }
}

#[test]
fn empirical_cdf_matches_model() {
    let p = params(3.0, 1.7);
    let n = 100_000;
    let mut y = sample_weibull(n, &p, SeedSpec::new(5)).unwrap();
    y.sort_by(f64::total_cmp);
    let ks = y
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = weibull_cdf(x, &p).unwrap();
            (f - i as f64 / n as f64)
                .abs()
                .max(((i + 1) as f64 / n as f64 - f).abs())
        })
        .fold(0.0, f64::max);
    // 1.63/sqrt(n) is the 1% critical value
    assert!(ks < 1.63 / (n as f64).sqrt(), "KS = {ks}");
}

#[test]
fn reciprocal_prior_ks() {
    let prior = PriorSpec::reciprocal(1.0, 20.0).unwrap();
    let m = 100_000;
    let mut draws = sample_prior(m, &prior, SeedSpec::new(17)).unwrap();
    draws.sort_by(f64::total_cmp);
    let ks = draws
        .iter()
        .enumerate()
        .map(|(i, &x)| (prior.cdf(x) - (i + 1) as f64 / m as f64).abs())
        .fold(0.0, f64::max);
    assert!(ks < 0.01, "KS = {ks}");
    assert!(draws.iter().all(|&x| prior.contains(x)));
}

#[test]
fn uniform_prior_sample_mean() {
    let prior = PriorSpec::uniform(1.0, 20.0).unwrap();
    let draws = sample_prior(1000, &prior, SeedSpec::new(3)).unwrap();
    let mean = draws.iter().sum::<f64>() / 1000.0;
    let se = 19.0 / 12f64.sqrt() / 1000f64.sqrt();
    assert!((mean - 10.5).abs() < 3.0 * se, "mean = {mean}");
}

#[test]
fn prior_kind_parses() {
    assert_eq!("uniform".parse::<PriorKind>().unwrap(), PriorKind::Uniform);
    assert_eq!("reciprocal".parse::<PriorKind>().unwrap(), PriorKind::Reciprocal);
    assert!("gaussian".parse::<PriorKind>().is_err());
}

#[test]
fn seeded_streams_are_reproducible_and_prefix_stable() {
    let p = params(2.0, 2.0);
    let a = sample_weibull(500, &p, SeedSpec::with_stream(1, 4)).unwrap();
    let b = sample_weibull(1000, &p, SeedSpec::with_stream(1, 4)).unwrap();
    assert_eq!(a[..], b[..500]);
    let c = sample_weibull(500, &p, SeedSpec::with_stream(1, 5)).unwrap();
    assert_ne!(a, c);
}

proptest! {
    #[test]
    fn quantile_inverts_cdf(eta in 0.5f64..20.0, gamma in 0.5f64..20.0, p in 1e-6f64..0.999_999) {
        let w = params(eta, gamma);
        let x = weibull_quantile(p, &w).unwrap();
        let back = weibull_cdf(x, &w).unwrap();
        prop_assert!((back - p).abs() <= 1e-12 * p.max(1e-3));
    }

    #[test]
    fn quantile_scales_with_eta(eta in 0.5f64..20.0, gamma in 0.5f64..20.0, p in 0.01f64..0.99, c in 0.1f64..10.0) {
        let a = weibull_quantile(p, &params(eta, gamma)).unwrap();
        let b = weibull_quantile(p, &params(c * eta, gamma)).unwrap();
        prop_assert!((b - c * a).abs() <= 1e-12 * b);
    }

    #[test]
    fn samples_are_positive(eta in 0.5f64..20.0, gamma in 0.5f64..20.0, seed in any::<u64>()) {
        let y = sample_weibull(64, &params(eta, gamma), SeedSpec::new(seed)).unwrap();
        prop_assert!(y.iter().all(|&x| x.is_finite() && x >= 0.0));
    }
}

#[test]
fn sample_mean_and_median_match_closed_form() {
    let p = params(2.0, 2.0);
    let mut y = sample_weibull(1_000_000, &p, SeedSpec::new(21)).unwrap();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    // 2 Γ(1.5) = √π
    let exact = std::f64::consts::PI.sqrt();
    assert!((mean - exact).abs() < 0.01 * exact, "mean {mean}");
    y.sort_by(f64::total_cmp);
    let median = weibull_quantile(0.5, &p).unwrap();
    assert!((median - 2.0 * std::f64::consts::LN_2.sqrt()).abs() < 1e-12);
    assert!((y[500_000] - median).abs() < 0.01 * median);
}
