use std::path::Path;
use std::process::{Command, Output};

use mass_core::aggregation::{write_signals_csv, DailySignal, StockSignal};
use mass_core::dataset::compute_labels;
use mass_core::engine::{RunConfig, RunStore};
use mass_core::synth::SyntheticMarket;

const TINY: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/tiny.toml");

fn mass(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mass"))
        .args(args)
        .env_remove("MASS_DATA_DIR")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_creates_a_store_and_rerun_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = mass(&["run", "--config", TINY, "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let store = RunStore::new(&out);
    assert_eq!(store.snapshots().unwrap().len(), 12);
    let signals = std::fs::read(store.signals_path()).unwrap();

    let again = mass(&["run", "--config", TINY, "--out", path(&out)]);
    assert_eq!(code(&again), 0, "{}", text(&again));
    assert!(text(&again).contains("0 days simulated"));
    assert_eq!(std::fs::read(store.signals_path()).unwrap(), signals);
}

#[test]
fn overrides_reach_the_stored_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = mass(&["run", "--config", TINY, "--out", path(&out), "--set", "n_inv=4", "--max-days", "2"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert_eq!(RunStore::new(&out).read_config().unwrap().n_inv, 4);
    assert!(text(&o).contains("mass resume"));

    // Resuming from the stored copy needs no --config.
    let r = mass(&["resume", "--out", path(&out)]);
    assert_eq!(code(&r), 0, "{}", text(&r));
    assert_eq!(RunStore::new(&out).snapshots().unwrap().len(), 12);

    // A changed key is a user error that names the key.
    let bad = mass(&["resume", "--config", TINY, "--out", path(&out)]);
    assert_eq!(code(&bad), 1);
    assert!(text(&bad).contains("n_inv"), "{}", text(&bad));
}

#[test]
fn user_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let missing = mass(&["run", "--config", "missing.toml", "--out", path(&out)]);
    assert_eq!(code(&missing), 1);
    assert!(text(&missing).contains("missing.toml"));
    assert_eq!(code(&mass(&["run", "--config", TINY, "--out", path(&out), "--bogus"])), 1);
    assert_eq!(code(&mass(&["run", "--config", TINY, "--out", path(&out), "--set", "alpha=2"])), 1);
    assert_eq!(code(&mass(&["run", "--config", TINY, "--out", path(&out), "--set", "no_such_key=1"])), 1);
    assert_eq!(code(&mass(&["run", "--config", TINY])), 1);
    assert_eq!(code(&mass(&["frobnicate"])), 1);
    assert_eq!(code(&mass(&["sweep", "--config", TINY, "--out", path(&out), "--counts", "a,b"])), 1);
    assert!(!out.exists(), "nothing may be written on a user error");
    assert_eq!(code(&mass(&["--help"])), 0);
    assert_eq!(code(&mass(&["--version"])), 0);
}

#[test]
fn report_and_backtest_write_under_the_store() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(code(&mass(&["run", "--config", TINY, "--out", path(&out)])), 0);
    let bt = mass(&["backtest", "--out", path(&out)]);
    assert_eq!(code(&bt), 0, "{}", text(&bt));
    for f in ["curves.csv", "trades.jsonl", "result.json"] {
        assert!(out.join("backtest").join(f).exists(), "{f}");
    }
    let r = mass(&["report", "--out", path(&out)]);
    assert_eq!(code(&r), 0, "{}", text(&r));
    let report = out.join("report");
    for f in ["factor_daily.csv", "summary.jsonl", "report.txt"] {
        assert!(report.join(f).exists(), "{f}");
    }
    for f in ["equity", "excess", "distribution"] {
        assert!(report.join("plots").join(format!("{f}.csv")).exists(), "{f}");
        assert!(report.join("plots").join(format!("{f}.svg")).exists(), "{f}");
    }
    let summary = std::fs::read_to_string(report.join("summary.jsonl")).unwrap();
    for metric in ["mean_ic", "icir", "mean_ric", "ricir", "sharpe", "max_drawdown"] {
        assert!(summary.contains(&format!("\"{metric}\"")), "{metric}");
    }
    let dist = std::fs::read_to_string(report.join("plots/distribution.csv")).unwrap();
    assert!(dist.starts_with("date,type_0,type_1,type_2\n"));
    assert_eq!(dist.lines().count(), 13);
}

#[test]
fn report_without_signals_names_the_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(code(&mass(&["run", "--config", TINY, "--out", path(&out)])), 0);
    std::fs::remove_file(out.join("signals.csv")).unwrap();
    let r = mass(&["report", "--out", path(&out)]);
    assert_eq!(code(&r), 2);
    assert!(text(&r).contains("signals.csv"), "{}", text(&r));
}

#[test]
fn label_signals_report_full_rank_correlation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("store");
    std::fs::create_dir_all(&out).unwrap();
    let config = RunConfig::from_file(Path::new(TINY), &[]).unwrap();
    RunStore::new(&out).write_config(&config).unwrap();
    let market: SyntheticMarket = config.data.synthetic.clone().unwrap();
    let ds = market.generate();
    let labels = compute_labels(&ds);
    let signals: Vec<DailySignal> = (0..ds.calendar().len() - 2)
        .map(|j| DailySignal {
            date: ds.calendar().date(j),
            alpha: None,
            records: ds
                .stocks()
                .iter()
                .enumerate()
                .map(|(s, code)| {
                    let y = labels.get(j, s).unwrap();
                    StockSignal { stock: code.clone(), m: y, sigma: 0.0, signal: y }
                })
                .collect(),
        })
        .collect();
    write_signals_csv(&out.join("signals.csv"), &signals).unwrap();
    let r = mass(&["report", "--out", path(&out)]);
    assert_eq!(code(&r), 0, "{}", text(&r));
    let rendered = std::fs::read_to_string(out.join("report/report.txt")).unwrap();
    let ric = rendered.lines().find(|l| l.starts_with("RIC ")).unwrap();
    assert!(ric.ends_with("100.00"), "{ric}");
}

#[test]
fn sweep_runs_each_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let o = mass(&["sweep", "--config", TINY, "--out", path(&out), "--counts", "3,6", "--set", "data.synthetic.n_days=6"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert!(out.join("agents_3x1").join("signals.csv").exists());
    assert!(out.join("agents_3x2").join("signals.csv").exists());
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn validate_data_reads_a_directory() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let ds = SyntheticMarket { n_stocks: 5, n_days: 4, ..SyntheticMarket::default() }.generate();
    mass_core::dataset::save_dataset(&ds, &data).unwrap();
    std::fs::write(data.join("schema.toml"), ds.schema().to_toml()).unwrap();
    let report_dir = dir.path().join("checked");
    let o = mass(&["validate-data", "--data", path(&data), "--out", path(&report_dir)]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert!(text(&o).contains("4 trading days"));
    assert!(text(&o).contains("5 stocks"));
    assert!(report_dir.join("validation.json").exists());

    std::fs::remove_file(data.join("prices.csv")).unwrap();
    let bad = mass(&["validate-data", "--data", path(&data)]);
    assert_eq!(code(&bad), 1);
    assert!(text(&bad).contains("prices.csv"));
}
