use iclscope::rng::SplitMix64;
use iclscope::stats::{
    anova_oneway, dist, fisher_z_compare, ks_two_sample, mantel, mean, pearson, sample_variance,
    spearman, welch_t_test, CorrelationMethod, StatsError,
};
use ndarray::Array2;
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, FisherSnedecor, Normal, StudentsT};

#[test]
fn special_functions_match_statrs() {
    for &x in &[0.1, 0.5, 1.0, 2.5, 7.3, 30.0, 170.5] {
        let ours = dist::ln_gamma(x);
        let theirs = statrs::function::gamma::ln_gamma(x);
        assert!(
            (ours - theirs).abs() < 1e-9 * theirs.abs().max(1.0),
            "ln_gamma({x})"
        );
    }
    for &(a, b) in &[
        (0.5, 0.5),
        (1.0, 3.0),
        (2.5, 7.0),
        (10.0, 40.0),
        (60.0, 2.0),
    ] {
        for &x in &[0.01, 0.2, 0.5, 0.77, 0.99] {
            let ours = dist::reg_inc_beta(a, b, x);
            let theirs = statrs::function::beta::beta_reg(a, b, x);
            assert!((ours - theirs).abs() < 1e-9, "I_{x}({a},{b})");
        }
    }
    for &a in &[0.5, 1.0, 3.0, 12.0] {
        for &x in &[0.1, 1.0, 4.0, 20.0] {
            let theirs = statrs::function::gamma::gamma_lr(a, x);
            assert!((dist::reg_gamma_p(a, x) - theirs).abs() < 1e-9);
            assert!((dist::reg_gamma_q(a, x) - (1.0 - theirs)).abs() < 1e-9);
        }
    }
    for &x in &[-3.0, -0.5, 0.0, 0.7, 2.0, 5.0] {
        assert!((dist::erfc(x) - statrs::function::erf::erfc(x)).abs() < 1e-10);
    }
}

#[test]
fn distribution_tails_match_statrs() {
    let normal = Normal::new(0.0, 1.0).unwrap();
    for &z in &[-4.0, -1.96, -0.3, 0.0, 1.0, 2.5] {
        assert!((dist::normal_cdf(z) - normal.cdf(z)).abs() < 1e-6);
    }
    for &df in &[1.0, 2.5, 4.0, 17.3, 120.0] {
        let t = StudentsT::new(0.0, 1.0, df).unwrap();
        for &x in &[-6.0, -2.0, -0.4, 0.0, 1.3, 3.7] {
            assert!(
                (dist::t_cdf(x, df) - t.cdf(x)).abs() < 1e-6,
                "t_cdf({x}, {df})"
            );
            let two = 2.0 * t.sf(x.abs());
            assert!((dist::t_two_sided(x, df) - two).abs() < 1e-6);
        }
    }
    for &(d1, d2) in &[(1.0, 5.0), (2.0, 27.0), (4.0, 10.0), (9.0, 90.0)] {
        let f = FisherSnedecor::new(d1, d2).unwrap();
        for &x in &[0.1, 0.8, 1.0, 3.0, 9.5] {
            assert!(
                (dist::f_sf(x, d1, d2) - f.sf(x)).abs() < 1e-6,
                "f_sf({x}, {d1}, {d2})"
            );
        }
    }
}

#[test]
fn kolmogorov_tail_reference() {
    // Q_KS(λ) = 2 Σ (-1)^{k-1} e^{-2k²λ²}.
    let series = |l: f64| {
        2.0 * (1..200)
            .map(|k| (-1f64).powi(k - 1) * (-2.0 * (k * k) as f64 * l * l).exp())
            .sum::<f64>()
    };
    for &l in &[0.5, 0.8, 1.0, 1.36, 2.0, 3.0] {
        assert!((dist::kolmogorov_sf(l) - series(l)).abs() < 1e-9, "λ={l}");
    }
    assert_eq!(dist::kolmogorov_sf(0.0), 1.0);
}

#[test]
fn reference_values() {
    let w = welch_t_test(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
    assert!((w.statistic + 1.2247).abs() < 1e-4);
    assert!((w.p_value - 0.2879).abs() < 1e-4);
    let a = anova_oneway(&[
        vec![1.0, 2.0, 3.0],
        vec![2.0, 3.0, 4.0],
        vec![3.0, 4.0, 5.0],
    ])
    .unwrap();
    assert!((a.statistic - 3.0).abs() < 1e-12);
    assert!((a.p_value - 0.125).abs() < 1e-9);
    let s = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
    assert!((s - 0.8).abs() < 1e-12);
    let f = fisher_z_compare(0.5, 103, 0.3, 103).unwrap();
    assert!((f.statistic - 1.69555).abs() < 1e-5);
    assert!((f.p_value - 0.08997).abs() < 1e-5);
    let k = ks_two_sample(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
    assert_eq!(k.statistic, 1.0);
}

fn welch_oracle(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let (va, vb) = (
        sample_variance(a) / a.len() as f64,
        sample_variance(b) / b.len() as f64,
    );
    let t = (mean(a) - mean(b)) / (va + vb).sqrt();
    let df = (va + vb).powi(2) / (va * va / (a.len() - 1) as f64 + vb * vb / (b.len() - 1) as f64);
    let p = 2.0 * StudentsT::new(0.0, 1.0, df).unwrap().sf(t.abs());
    (t, df, p)
}

fn anova_oracle(groups: &[Vec<f64>]) -> (f64, f64) {
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let grand = mean(&all);
    let ssb: f64 = groups
        .iter()
        .map(|g| g.len() as f64 * (mean(g) - grand).powi(2))
        .sum();
    let ssw: f64 = groups
        .iter()
        .map(|g| g.iter().map(|x| (x - mean(g)).powi(2)).sum::<f64>())
        .sum();
    let (d1, d2) = ((groups.len() - 1) as f64, (all.len() - groups.len()) as f64);
    let f = (ssb / d1) / (ssw / d2);
    (f, FisherSnedecor::new(d1, d2).unwrap().sf(f))
}

fn sample(rng: &mut SplitMix64, n: usize, shift: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gaussian() + shift).collect()
}

#[test]
fn planted_shift_is_detected() {
    let mut rng = SplitMix64::new(3, 0);
    let a = sample(&mut rng, 100, 0.0);
    let b = sample(&mut rng, 100, 1.0);
    assert!(welch_t_test(&a, &b).unwrap().p_value < 1e-3);
    assert!(ks_two_sample(&a, &b).unwrap().p_value < 1e-3);
    let c = sample(&mut rng, 100, 0.0);
    assert!(anova_oneway(&[a, b, c]).unwrap().p_value < 1e-3);
}

#[test]
fn degenerate_inputs() {
    assert_eq!(
        pearson(&[1.0, 2.0], &[1.0, 2.0]),
        Err(StatsError::TooFewSamples { needed: 3, got: 2 })
    );
    assert_eq!(
        pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]),
        Err(StatsError::LengthMismatch(3, 2))
    );
    assert_eq!(
        pearson(&[1.0, f64::NAN, 3.0], &[1.0, 2.0, 3.0]),
        Err(StatsError::NonFinite)
    );
    let m = Array2::<f64>::eye(4);
    let h = Array2::<f64>::ones((4, 4));
    assert_eq!(
        mantel(&m, &h, 9, CorrelationMethod::Pearson, 0),
        Err(StatsError::DegenerateHypothesis)
    );
    let small = Array2::<f64>::eye(3);
    assert_eq!(
        mantel(&m, &small, 9, CorrelationMethod::Pearson, 0),
        Err(StatsError::ShapeMismatch)
    );
}

#[test]
fn mantel_is_reproducible_and_floored() {
    let n = 9;
    let mut rng = SplitMix64::new(1, 0);
    let h = Array2::from_shape_fn((n, n), |(i, j)| if i % 3 == j % 3 { 1.0 } else { 0.0 });
    let noise = Array2::from_shape_fn((n, n), |_| rng.gaussian());
    let m = &h + &(0.01 * (&noise + &noise.t()));
    let a = mantel(&m, &h, 199, CorrelationMethod::Pearson, 4).unwrap();
    let b = mantel(&m, &h, 199, CorrelationMethod::Pearson, 4).unwrap();
    assert_eq!(a, b);
    assert!(a.p_value >= 1.0 / 200.0);
    assert!(a.p_value < 0.05);
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(200) })]

    #[test]
    fn welch_matches_oracle(a in prop::collection::vec(-50.0f64..50.0, 2..30), b in prop::collection::vec(-50.0f64..50.0, 2..30)) {
        prop_assume!(sample_variance(&a) > 1e-6 && sample_variance(&b) > 1e-6);
        let r = welch_t_test(&a, &b).unwrap();
        let (t, df, p) = welch_oracle(&a, &b);
        prop_assert!((r.statistic - t).abs() <= 1e-9 * t.abs().max(1.0));
        prop_assert!((r.df.unwrap() - df).abs() <= 1e-9 * df);
        prop_assert!((r.p_value - p).abs() < 1e-6);
        let swapped = welch_t_test(&b, &a).unwrap();
        prop_assert!((swapped.statistic + r.statistic).abs() < 1e-12 * t.abs().max(1.0));
        prop_assert!((swapped.p_value - r.p_value).abs() < 1e-12);
    }

    #[test]
    fn anova_matches_oracle(groups in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2..12), 2..5)) {
        let ssw: f64 = groups.iter().map(|g| g.iter().map(|x| (x - mean(g)).powi(2)).sum::<f64>()).sum();
        prop_assume!(ssw > 1e-6);
        let r = anova_oneway(&groups).unwrap();
        let (f, p) = anova_oracle(&groups);
        prop_assert!((r.statistic - f).abs() <= 1e-9 * f.max(1.0));
        prop_assert!((r.p_value - p).abs() < 1e-6);
    }

    #[test]
    fn correlations_are_bounded_and_symmetric(pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40)) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        for f in [pearson, spearman] {
            if let Ok(r) = f(&x, &y) {
                prop_assert!((-1.0..=1.0).contains(&r));
                prop_assert!((f(&y, &x).unwrap() - r).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spearman_ignores_monotone_transforms(x in prop::collection::vec(-5.0f64..5.0, 3..30), y in prop::collection::vec(-5.0f64..5.0, 30)) {
        let y = &y[..x.len()];
        if let Ok(r) = spearman(&x, y) {
            let ex: Vec<f64> = x.iter().map(|v| v.exp()).collect();
            let cy: Vec<f64> = y.iter().map(|v| v * v * v + 2.0 * v).collect();
            prop_assert!((spearman(&ex, &cy).unwrap() - r).abs() < 1e-12);
        }
    }

    #[test]
    fn p_values_lie_in_unit_interval(a in prop::collection::vec(-5.0f64..5.0, 2..20), b in prop::collection::vec(-5.0f64..5.0, 2..20)) {
        if let Ok(r) = welch_t_test(&a, &b) {
            prop_assert!((0.0..=1.0).contains(&r.p_value));
        }
        let k = ks_two_sample(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&k.statistic));
        prop_assert!((0.0..=1.0).contains(&k.p_value));
    }

    #[test]
    fn fisher_is_antisymmetric(r1 in -0.99f64..0.99, r2 in -0.99f64..0.99, n1 in 4usize..500, n2 in 4usize..500) {
        let a = fisher_z_compare(r1, n1, r2, n2).unwrap();
        let b = fisher_z_compare(r2, n2, r1, n1).unwrap();
        prop_assert!((a.statistic + b.statistic).abs() < 1e-9);
        prop_assert!((a.p_value - b.p_value).abs() < 1e-12);
    }
}
