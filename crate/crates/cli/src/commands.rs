use std::path::{Path, PathBuf};

use mass_core::backtest::run_backtest;
use mass_core::dataset::MarketDataset;
use mass_core::engine::{resume, run_simulation, scaling_sweep, AgentCount, RunConfig, RunOptions, RunStore};

use crate::{Common, Failure, RunFlags};

pub const DATA_DIR_ENV: &str = "MASS_DATA_DIR";

pub fn required_out(common: &Common) -> Result<&Path, Failure> {
    common.out.as_deref().ok_or_else(|| Failure::User("--out <DIR> is required".into()))
}

/// Reads `--config` with `--set` overrides and pins every relative path to
/// the configuration file's directory, so the stored copy is self-contained.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig, Failure> {
    if !path.exists() {
        return Err(Failure::User(format!("configuration file not found: {}", path.display())));
    }
    let mut config = RunConfig::from_file(path, overrides).map_err(|e| Failure::User(e.to_string()))?;
    let base = path.parent().map(absolute).unwrap_or_else(|| absolute(Path::new(".")));
    let pin = |p: &mut Option<PathBuf>| {
        if let Some(rel) = p.as_ref().filter(|p| p.is_relative()) {
            *p = Some(base.join(rel));
        }
    };
    pin(&mut config.data.dir);
    pin(&mut config.data.schema);
    pin(&mut config.replay_from);
    pin(&mut config.llm_fixtures);
    if config.data.dir.is_none() && config.data.synthetic.is_none() {
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
            config.data.dir = Some(absolute(Path::new(&dir)));
        }
    }
    config.validate().map_err(|e| Failure::User(e.to_string()))?;
    Ok(config)
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

/// The configuration to use for an existing store: `--config` when given,
/// otherwise the store's own copy.
pub fn store_config(common: &Common, store: &RunStore) -> Result<RunConfig, Failure> {
    match &common.config {
        Some(path) => load_config(path, &common.set),
        None if !common.set.is_empty() => Err(Failure::User("--set needs --config".into())),
        None if store.exists() => Ok(store.read_config()?),
        None => Err(Failure::User(format!(
            "{} is not a run store (no config.json) and no --config was given",
            store.root().display()
        ))),
    }
}

pub fn load_data(config: &RunConfig) -> Result<MarketDataset, Failure> {
    let fallback = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
    Ok(config.data.load(Path::new("/"), fallback.as_deref())?)
}

pub fn run(common: &Common, flags: &RunFlags, resuming: bool) -> Result<(), Failure> {
    let out = required_out(common)?;
    let store = RunStore::new(out);
    let config = if resuming {
        store_config(common, &store)?
    } else {
        let path = common.config.as_deref().ok_or_else(|| Failure::User("--config <PATH> is required".into()))?;
        load_config(path, &common.set)?
    };
    let ds = load_data(&config)?;
    let opts = RunOptions { max_days: flags.max_days, trace: flags.trace };
    let summary = if resuming {
        resume(&ds, &config, out, opts)?
    } else {
        run_simulation(&ds, &config, out, opts)?
    };
    println!(
        "{} days simulated, {}/{} complete, {} failed, provider calls {}",
        summary.days_run,
        summary.days_done,
        summary.days_total,
        summary.failed_days.len(),
        summary.provider_calls.total()
    );
    if !summary.is_complete() {
        println!("continue with: mass resume --out {}", out.display());
    }
    Ok(())
}

pub fn backtest(common: &Common) -> Result<(), Failure> {
    let out = required_out(common)?;
    let store = RunStore::new(out);
    let config = store_config(common, &store)?;
    if !store.signals_path().exists() {
        return Err(Failure::Runtime(format!("missing artifact: {}", store.signals_path().display())));
    }
    let ds = load_data(&config)?;
    let signals = store.read_signals()?;
    let result = run_backtest(&signals, &ds, &config.backtest)?;
    let dir = out.join("backtest");
    std::fs::create_dir_all(&dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    result.write_curves_csv(&dir.join("curves.csv"))?;
    result.write_trades_jsonl(&dir.join("trades.jsonl"))?;
    let json = serde_json::to_string_pretty(&result).map_err(|e| Failure::Runtime(e.to_string()))?;
    std::fs::write(dir.join("result.json"), json).map_err(|e| Failure::Runtime(e.to_string()))?;
    print!("{}", result.render());
    println!("{} trades, {} rebalances -> {}", result.trades.len(), result.rebalance_dates.len(), dir.display());
    Ok(())
}

pub fn sweep(common: &Common, counts: &str, max_types: Option<usize>) -> Result<(), Failure> {
    let out = required_out(common)?;
    let path = common.config.as_deref().ok_or_else(|| Failure::User("--config <PATH> is required".into()))?;
    let config = load_config(path, &common.set)?;
    let counts = AgentCount::parse_list(counts, max_types.unwrap_or(config.n_type)).map_err(|e| Failure::User(e.to_string()))?;
    let ds = load_data(&config)?;
    let report = scaling_sweep(&ds, &config, &counts, out, RunOptions::default())?;
    println!("{:>8} {:>6} {:>8} {:>9} {:>8}", "agents", "types", "RIC", "RICIR", "days");
    let fmt = |v: Option<f64>, scale: f64| v.map_or_else(|| "n/a".into(), |x| format!("{:.2}", x * scale));
    for r in &report.rows {
        println!(
            "{:>8} {:>6} {:>8} {:>9} {:>8}{}",
            r.n_agents,
            r.n_type,
            fmt(r.mean_ric, 100.0),
            fmt(r.ricir, 1.0),
            r.days,
            r.failure.as_deref().map_or(String::new(), |f| format!("  failed: {f}"))
        );
    }
    if report.rows.iter().any(|r| r.failure.is_some()) {
        return Err(Failure::Runtime("some sweep points failed".into()));
    }
    Ok(())
}

pub fn validate_data(common: &Common, data: Option<&Path>) -> Result<(), Failure> {
    let mut config = match &common.config {
        Some(path) => load_config(path, &common.set)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = data {
        config.data.dir = Some(absolute(dir));
        config.data.synthetic = None;
    }
    let ds = load_data(&config)?;
    let report = ds.load_report();
    let cal = ds.calendar();
    println!("{} trading days", cal.len());
    if !cal.is_empty() {
        println!("{} .. {}", cal.date(0), cal.date(cal.len() - 1));
    }
    println!("{} stocks, {} feature columns", ds.stocks().len(), ds.schema().features.len());
    println!("{} missing cells, {} skipped rows, {} inconsistent bars", report.missing_cells, report.skipped_rows, report.inconsistent_bars);
    for w in &report.warnings {
        println!("warning: {w}");
    }
    if let Some(out) = &common.out {
        std::fs::create_dir_all(out).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
        let json = serde_json::to_string_pretty(report).map_err(|e| Failure::Runtime(e.to_string()))?;
        std::fs::write(out.join("validation.json"), json).map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    Ok(())
}
