use headsieve::stats::{normal_sf, spearman, suggest_tau, ztest_mean_gt};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

/// Upper-tail values computed to 40 significant digits with an
/// arbitrary-precision erfc, rounded to 18.
#[allow(clippy::excessive_precision)]
const SF_TABLE: [(f64, f64); 38] = [
    (-8.0, 9.99999999999999378e-1),
    (-7.5, 9.99999999999968091e-1),
    (-7.0, 9.99999999998720187e-1),
    (-6.5, 9.99999999959839994e-1),
    (-6.0, 9.99999999013412355e-1),
    (-5.5, 9.99999981010437534e-1),
    (-5.0, 9.99999713348428121e-1),
    (-4.5, 9.9999660232687527e-1),
    (-4.0, 9.9996832875816688e-1),
    (-3.5, 9.99767370920964475e-1),
    (-3.0, 9.98650101968369905e-1),
    (-2.5, 9.93790334674223865e-1),
    (-2.0, 9.77249868051820793e-1),
    (-1.5, 9.33192798731141934e-1),
    (-1.0, 8.41344746068542949e-1),
    (-0.5, 6.91462461274013104e-1),
    (0.0, 5.0e-1),
    (0.5, 3.08537538725986896e-1),
    (1.0, 1.58655253931457051e-1),
    (1.5, 6.6807201268858066e-2),
    (2.0, 2.27501319481792072e-2),
    (2.5, 6.20966532577613517e-3),
    (3.0, 1.34989803163009453e-3),
    (3.5, 2.32629079035525036e-4),
    (4.0, 3.16712418331199213e-5),
    (4.5, 3.3976731247300604e-6),
    (5.0, 2.86651571879193912e-7),
    (5.5, 1.89895624658877194e-8),
    (6.0, 9.86587645037698141e-10),
    (6.5, 4.01600058385911781e-11),
    (7.0, 1.279812543885835e-12),
    (7.5, 3.19089167291089623e-14),
    (8.0, 6.22096057427178412e-16),
    (10.0, 7.61985302416052607e-24),
    (15.0, 3.67096619931275089e-51),
    (20.0, 2.7536241186062337e-89),
    (30.0, 4.90671392714818706e-198),
    (37.0, 5.72557122252457682e-300),
];

/// Upper tail by composite Simpson quadrature of the normal density.
fn quadrature_sf(z: f64) -> f64 {
    let upper = 40.0;
    let n = 200_000;
    let h = (upper - z) / n as f64;
    let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = pdf(z) + pdf(upper);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * pdf(z + i as f64 * h);
    }
    acc * h / 3.0
}

#[test]
fn sf_matches_independent_oracles() {
    let reference = Normal::standard();
    let mut z = -8.0;
    while z <= 8.0 {
        let ours = normal_sf(z);
        // statrs' erfc is good to about 2.5e-11 here; the other two oracles are tighter
        assert!((ours - reference.sf(z)).abs() < 5e-11, "statrs at {z}");
        assert!((ours - quadrature_sf(z)).abs() < 1e-12, "quadrature at {z}");
        z += 0.0625;
    }
}

#[test]
fn sf_matches_high_precision_table() {
    for (z, expected) in SF_TABLE {
        let ours = normal_sf(z);
        let err = (ours - expected).abs();
        assert!(
            err <= 4e-16 || err <= 1e-13 * expected,
            "z = {z}: {ours:e} vs {expected:e}"
        );
    }
}

#[test]
fn sf_relative_accuracy_in_the_far_tail() {
    let reference = Normal::standard();
    for z in [5.0, 8.0, 12.0, 20.0, 30.0] {
        let rel = (normal_sf(z) / reference.sf(z) - 1.0).abs();
        assert!(rel < 1e-10, "z = {z}: relative error {rel}");
    }
}

fn ranked(xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|&x| x.powi(3) + 2.0 * x).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn sf_is_strictly_decreasing(a in -8.0f64..8.0, d in 1e-3f64..1.0) {
        prop_assert!(normal_sf(a + d) < normal_sf(a));
    }

    #[test]
    fn sf_reflection(z in -40.0f64..40.0) {
        prop_assert!((normal_sf(z) + normal_sf(-z) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn p_value_falls_with_the_mean(
        base in prop::collection::vec(0.0f64..6.0, 3..40),
        shift in 0.01f64..1.0,
    ) {
        prop_assume!(base.iter().any(|&x| x != base[0]));
        let moved: Vec<f64> = base.iter().map(|x| x + shift).collect();
        let p0 = ztest_mean_gt(&base, 3.0, 0.05).unwrap().p_value;
        let p1 = ztest_mean_gt(&moved, 3.0, 0.05).unwrap().p_value;
        prop_assert!(p1 <= p0);
        // strict while both stay away from the saturated ends
        if p0 > 1e-300 && p1 < 1.0 {
            prop_assert!(p1 < p0);
        }
    }

    #[test]
    fn p_value_rises_with_tau(
        xs in prop::collection::vec(0.0f64..6.0, 3..40),
        tau in 0.5f64..5.0,
        step in 0.01f64..1.0,
    ) {
        prop_assume!(xs.iter().any(|&x| x != xs[0]));
        let lo = ztest_mean_gt(&xs, tau, 0.05).unwrap().p_value;
        let hi = ztest_mean_gt(&xs, tau + step, 0.05).unwrap().p_value;
        prop_assert!(hi >= lo);
        if lo > 1e-300 && hi < 1.0 {
            prop_assert!(hi > lo);
        }
    }

    #[test]
    fn spearman_invariances(
        pairs in prop::collection::vec((-50i32..50, -50i32..50), 3..60),
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| f64::from(p.0)).collect();
        let y: Vec<f64> = pairs.iter().map(|p| f64::from(p.1)).collect();
        let Ok(rho) = spearman(&x, &y) else {
            // constant input: every transform stays degenerate
            prop_assert!(spearman(&ranked(&x), &y).is_err());
            return Ok(());
        };
        prop_assert!((-1.0..=1.0).contains(&rho));
        prop_assert!((spearman(&ranked(&x), &y).unwrap() - rho).abs() < 1e-12);
        prop_assert!((spearman(&x, &ranked(&y)).unwrap() - rho).abs() < 1e-12);
        prop_assert!((spearman(&y, &x).unwrap() - rho).abs() < 1e-12);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        prop_assert!((spearman(&x, &neg).unwrap() + rho).abs() < 1e-12);
    }

    #[test]
    fn suggest_tau_shifts_with_integers(
        quarters in prop::collection::vec(0u32..64, 1..50),
        c in -5i64..10,
    ) {
        // dyadic values keep every sum exact
        let xs: Vec<f64> = quarters.iter().map(|&q| f64::from(q) / 4.0).collect();
        let shifted: Vec<f64> = xs.iter().map(|x| x + c as f64).collect();
        prop_assert_eq!(suggest_tau(&shifted).unwrap(), suggest_tau(&xs).unwrap() + c);
    }
}
