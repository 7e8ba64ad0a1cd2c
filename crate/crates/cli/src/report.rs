use std::fmt::Write as _;
use std::path::Path;

use mass_core::backtest::BacktestResult;
use mass_core::engine::{evaluate_signals, RunStore};
use mass_core::metrics::{write_summary_jsonl, SummaryRow};

use crate::commands::{load_data, required_out, store_config};
use crate::svg::{line_chart, stacked_chart};
use crate::{Common, Failure};

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

/// Writes `report/` inside the store: daily factor table, summary rows,
/// rendered text, and plot data with SVG renderings.
pub fn report(common: &Common) -> Result<(), Failure> {
    let out = required_out(common)?;
    let store = RunStore::new(out);
    let config = store_config(common, &store)?;
    if !store.signals_path().exists() {
        return Err(Failure::Runtime(format!("missing artifact: {}", store.signals_path().display())));
    }
    let ds = load_data(&config)?;
    let signals = store.read_signals()?;
    let metrics = evaluate_signals(&ds, &signals);

    let dir = out.join("report");
    let plots = dir.join("plots");
    std::fs::create_dir_all(&plots).map_err(|e| Failure::Runtime(format!("{}: {e}", plots.display())))?;
    metrics.write_daily_csv(&dir.join("factor_daily.csv"))?;

    let mut text = format!("run {}\n{} signal days\n\n{}", out.display(), signals.len(), metrics.render());
    let mut rows = metrics.summary_rows();

    let backtest_path = out.join("backtest").join("result.json");
    if backtest_path.exists() {
        let raw = std::fs::read_to_string(&backtest_path).map_err(|e| Failure::Runtime(format!("{}: {e}", backtest_path.display())))?;
        let bt: BacktestResult =
            serde_json::from_str(&raw).map_err(|e| Failure::Runtime(format!("{}: {e}", backtest_path.display())))?;
        let s = &bt.summary;
        rows.extend([
            SummaryRow::new("annualized_return", s.annualized_return, "fraction"),
            SummaryRow::new("sharpe", s.sharpe, "ratio"),
            SummaryRow::new("max_drawdown", Some(s.max_drawdown), "fraction"),
            SummaryRow::new("excess_annualized_return", s.excess_annualized_return, "fraction"),
            SummaryRow::new("terminal_equity", Some(s.terminal_equity), "multiple"),
        ]);
        let _ = write!(text, "\nbacktest\n{}", bt.render());
        let labels: Vec<String> = bt.dates.iter().map(|d| d.to_string()).collect();
        let mut equity = String::from("date,equity,benchmark\n");
        let mut excess = String::from("date,excess\n");
        for i in 0..labels.len() {
            let _ = writeln!(equity, "{},{},{}", labels[i], bt.equity[i], bt.benchmark[i]);
            let _ = writeln!(excess, "{},{}", labels[i], bt.excess[i]);
        }
        write(&plots.join("equity.csv"), &equity)?;
        write(&plots.join("excess.csv"), &excess)?;
        write(&plots.join("equity.svg"), &line_chart("Equity", &labels, &[("portfolio", &bt.equity), ("benchmark", &bt.benchmark)]))?;
        write(&plots.join("excess.svg"), &line_chart("Excess return", &labels, &[("excess", &bt.excess)]))?;
    } else {
        text.push_str("\nbacktest: none (run `mass backtest` first)\n");
    }

    let snaps = store.snapshots()?;
    if let Some(first) = snaps.first() {
        let n = first.distribution.len();
        let labels: Vec<String> = snaps.iter().map(|s| s.date.to_string()).collect();
        let names: Vec<String> = (0..n).map(|i| format!("type_{i}")).collect();
        let mut csv = format!("date,{}\n", names.join(","));
        let mut layers = vec![Vec::with_capacity(snaps.len()); n];
        for s in &snaps {
            let w = s.distribution.weights();
            let cells: Vec<String> = w.iter().map(f64::to_string).collect();
            let _ = writeln!(csv, "{},{}", s.date, cells.join(","));
            for (layer, v) in layers.iter_mut().zip(w) {
                layer.push(*v);
            }
        }
        write(&plots.join("distribution.csv"), &csv)?;
        let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
        write(&plots.join("distribution.svg"), &stacked_chart("Type distribution", &labels, &name_refs, &layers))?;
    }

    write_summary_jsonl(&dir.join("summary.jsonl"), &rows)?;
    write(&dir.join("report.txt"), &text)?;
    print!("{text}");
    println!("\nwritten to {}", dir.display());
    Ok(())
}
