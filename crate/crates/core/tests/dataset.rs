use proptest::prelude::*;

use mass_core::dataset::{compute_labels, load_dataset, save_dataset, FeatureSubset, LABEL_AVAILABILITY_LAG};
use mass_core::synth::SyntheticMarket;
use mass_core::Error;

#[test]
fn saved_market_loads_back_identically() {
    let ds = SyntheticMarket { n_stocks: 12, n_days: 9, limit_rate: 0.1, ..SyntheticMarket::default() }.generate();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let back = load_dataset(dir.path(), ds.schema()).unwrap();
    assert_eq!(back.calendar().days(), ds.calendar().days());
    assert_eq!(back.stocks(), ds.stocks());
    assert_eq!(compute_labels(&back), compute_labels(&ds));
    for day in 0..9 {
        for s in 0..12 {
            assert_eq!(back.bar(day, s), ds.bar(day, s));
            assert_eq!(back.feature_row(day, s), ds.feature_row(day, s));
        }
        assert_eq!(back.index_close(day), ds.index_close(day));
    }
}

#[test]
fn missing_required_file_is_named() {
    let ds = SyntheticMarket { n_stocks: 3, n_days: 3, ..SyntheticMarket::default() }.generate();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    std::fs::remove_file(dir.path().join("macro.csv")).unwrap();
    match load_dataset(dir.path(), ds.schema()) {
        Err(Error::MissingFile(f)) => assert_eq!(f, "macro.csv"),
        other => panic!("expected a missing file, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn labels_are_realized_two_days_later(seed in any::<u64>(), n_days in 3usize..12) {
        let ds = SyntheticMarket { n_stocks: 5, n_days, seed, ..SyntheticMarket::default() }.generate();
        let labels = compute_labels(&ds);
        for day in 0..n_days {
            for s in 0..5 {
                let known = labels.get(day, s).is_some();
                prop_assert_eq!(known, day + 2 < n_days);
            }
            for t in 0..n_days {
                prop_assert_eq!(labels.is_available(t, day), t + LABEL_AVAILABILITY_LAG <= day);
            }
        }
    }

    #[test]
    fn visible_features_respect_the_subset(seed in any::<u64>(), mask in 1u8..16) {
        let ds = SyntheticMarket { n_stocks: 4, n_days: 3, seed, ..SyntheticMarket::default() }.generate();
        let columns: Vec<String> = (0..4).filter(|k| mask & (1 << k) != 0).map(|k| format!("f{k}")).collect();
        let subset = FeatureSubset { columns: columns.clone(), text_kinds: vec![] }.validated(ds.schema()).unwrap();
        let view = ds.visible_features(&subset, 1, 2);
        let names: Vec<String> = view.values.iter().map(|(n, _)| n.clone()).collect();
        prop_assert_eq!(names, columns);
        prop_assert_eq!(view.date, ds.calendar().date(2));
    }
}
