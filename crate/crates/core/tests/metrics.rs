use chrono::NaiveDate;
use proptest::prelude::*;

use mass_core::metrics::{
    annualized_return, average_ranks, factor_report, max_drawdown, pearson, period_returns, sharpe, spearman,
    DailyCrossSection,
};

fn distinct(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::hash_set(-1000i32..1000, n).prop_map(|s| s.into_iter().map(|v| v as f64 / 10.0).collect())
}

proptest! {
    #[test]
    fn spearman_ignores_monotone_transforms(x in distinct(3..30), seed in any::<u64>()) {
        let y: Vec<f64> = x.iter().map(|v| ((v * 7.0 + seed as f64 % 13.0) % 5.0) + v / 100.0).collect();
        let a = spearman(&x, &y);
        let warped: Vec<f64> = x.iter().map(|v| v.powi(3) + 4.0 * v).collect();
        prop_assert_eq!(spearman(&warped, &y), a);
        if let Some(r) = a {
            prop_assert!((-1.0..=1.0).contains(&r));
            prop_assert_eq!(spearman(&y, &x), Some(r));
        }
    }

    #[test]
    fn identical_order_is_exactly_one(x in distinct(3..40)) {
        let y: Vec<f64> = x.iter().map(|v| v * 3.0 + 1.0).collect();
        prop_assert_eq!(spearman(&x, &y), Some(1.0));
        let z: Vec<f64> = x.iter().map(|v| -v).collect();
        prop_assert_eq!(spearman(&x, &z), Some(-1.0));
    }

    #[test]
    fn pearson_is_affine_invariant(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..40),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let moved: Vec<f64> = x.iter().map(|v| v * scale + shift).collect();
        match (pearson(&x, &y), pearson(&moved, &y)) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-9),
            (a, b) => prop_assert_eq!(a.is_some(), b.is_some()),
        }
    }

    #[test]
    fn average_ranks_sum_to_triangle(x in prop::collection::vec(0i32..6, 1..30)) {
        let x: Vec<f64> = x.into_iter().map(f64::from).collect();
        let r = average_ranks(&x);
        let n = x.len() as f64;
        prop_assert_eq!(r.iter().sum::<f64>(), n * (n + 1.0) / 2.0);
    }

    #[test]
    fn drawdown_is_a_fraction(curve in prop::collection::vec(0.01f64..10.0, 1..50)) {
        let mdd = max_drawdown(&curve);
        prop_assert!((0.0..1.0).contains(&mdd));
        let rising: Vec<f64> = (1..=curve.len()).map(|i| i as f64).collect();
        prop_assert_eq!(max_drawdown(&rising), 0.0);
    }

    #[test]
    fn annualizing_a_constant_return(r in -0.01f64..0.01, n in 1usize..300) {
        let ar = annualized_return(&vec![r; n], 252).unwrap();
        prop_assert!((ar - ((1.0 + r).powf(252.0) - 1.0)).abs() < 1e-9);
    }
}

#[test]
fn two_day_factor_report() {
    let d = |n| NaiveDate::from_ymd_opt(2023, 2, n).unwrap();
    // Day one: one swap in four (RIC 0.8); day two: identical order (RIC 1).
    let sections = vec![
        DailyCrossSection { date: d(1), signal: vec![1.0, 2.0, 3.0, 4.0], returns: vec![0.1, 0.3, 0.2, 0.4] },
        DailyCrossSection { date: d(2), signal: vec![1.0, 2.0, 3.0, 4.0], returns: vec![0.1, 0.2, 0.3, 0.4] },
        DailyCrossSection { date: d(3), signal: vec![1.0, 1.0, 1.0], returns: vec![0.1, 0.2, 0.3] },
    ];
    let r = factor_report(&sections);
    assert_eq!(r.daily.len(), 2);
    assert_eq!(r.skipped_days, 1);
    assert_eq!(r.daily[0].ric, Some(0.8));
    assert!((r.mean_ric.unwrap() - 0.9).abs() < 1e-15);
    assert!((r.ricir.unwrap() - 9.0).abs() < 1e-12);
}

#[test]
fn curve_fixtures() {
    assert_eq!(max_drawdown(&[1.0, 1.2, 0.9, 1.1]), 0.25);
    assert_eq!(period_returns(&[1.0, 1.5, 0.75]), vec![0.5, -0.5]);
    assert!((sharpe(&[0.02, 0.0], 0.0, 252).unwrap() - 252f64.sqrt()).abs() < 1e-12);
    assert_eq!(sharpe(&[0.01, -0.01], 0.0, 252), Some(0.0));
    assert_eq!(sharpe(&[0.01], 0.0, 252), None);
    assert_eq!(annualized_return(&[], 252), None);
}
