//! Long-only index-enhancement backtest over daily signals.
//!
//! On each rebalance day the portfolio moves to equal weights over the top
//! fraction of tradable stocks, ranked by the latest signal dated strictly
//! before that day. Trades fill at the day's execution price and pay half
//! the round-trip cost on each side's notional. Between rebalances positions
//! are held as share counts, so weights drift with prices.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::aggregation::DailySignal;
use crate::dataset::{MarketDataset, PriceBar};
use crate::error::{Error, Result};
use crate::metrics::{annualized_return, max_drawdown, period_returns, sharpe, PERIODS_PER_YEAR};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rebalance {
    /// First trading day of each ISO week.
    #[default]
    Weekly,
    Daily,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionPrice {
    /// Fifteen-minute reference price, falling back to the open.
    #[default]
    RefPrice,
    Open,
}

impl ExecutionPrice {
    fn of(self, bar: &PriceBar) -> f64 {
        match self {
            ExecutionPrice::RefPrice => bar.execution_price(),
            ExecutionPrice::Open => bar.open,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktestConfig {
    pub rebalance: Rebalance,
    pub top_fraction: f64,
    pub round_trip_cost: f64,
    pub execution_price: ExecutionPrice,
    /// Per-period risk-free rate used for the Sharpe ratio.
    pub risk_free: f64,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            rebalance: Rebalance::Weekly,
            top_fraction: 0.2,
            round_trip_cost: 0.001,
            execution_price: ExecutionPrice::RefPrice,
            risk_free: 0.0,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.top_fraction > 0.0 && self.top_fraction <= 1.0) {
            return Err(Error::Config(format!("top_fraction {} outside (0, 1]", self.top_fraction)));
        }
        if !(self.round_trip_cost >= 0.0 && self.round_trip_cost.is_finite()) {
            return Err(Error::Config(format!("round_trip_cost {} must be >= 0", self.round_trip_cost)));
        }
        Ok(())
    }
}

/// Holdings count for `n` ranked stocks.
pub fn holdings_count(n: usize, top_fraction: f64) -> usize {
    ((top_fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n.max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Buy,
    Sell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub date: NaiveDate,
    pub stock: String,
    pub action: Action,
    /// Change in portfolio weight, relative to pre-trade equity.
    pub weight_change: f64,
    pub notional: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BacktestSummary {
    pub terminal_equity: f64,
    pub annualized_return: Option<f64>,
    pub sharpe: Option<f64>,
    pub max_drawdown: f64,
    pub excess_annualized_return: Option<f64>,
    pub total_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestResult {
    /// Curve dates; the first point is the day before the first rebalance,
    /// when the book is still all cash.
    pub dates: Vec<NaiveDate>,
    pub equity: Vec<f64>,
    pub benchmark: Vec<f64>,
    pub excess: Vec<f64>,
    pub trades: Vec<Trade>,
    pub rebalance_dates: Vec<NaiveDate>,
    /// Rebalance days with nothing tradable; the previous book was held.
    pub skipped_rebalances: Vec<NaiveDate>,
    pub summary: BacktestSummary,
}

/// Equity divided by benchmark, rescaled to start at 1.
pub fn excess_curve(equity: &[(NaiveDate, f64)], benchmark: &[(NaiveDate, f64)]) -> Result<Vec<f64>> {
    if equity.len() != benchmark.len() || equity.iter().zip(benchmark).any(|(a, b)| a.0 != b.0) {
        return Err(Error::Contract("equity and benchmark dates are not aligned".into()));
    }
    if benchmark.iter().any(|(_, b)| !(*b > 0.0)) {
        return Err(Error::Contract("benchmark must be positive".into()));
    }
    let Some(first) = equity.first() else {
        return Ok(Vec::new());
    };
    let base = first.1 / benchmark[0].1;
    Ok(equity.iter().zip(benchmark).map(|(e, b)| e.1 / b.1 / base).collect())
}

struct Book {
    cash: f64,
    /// stock index -> shares
    shares: BTreeMap<usize, f64>,
    /// Last known execution price per held stock.
    last_price: BTreeMap<usize, f64>,
}

impl Book {
    fn mark(&mut self, ds: &MarketDataset, day: usize, px: ExecutionPrice) -> f64 {
        let mut value = self.cash;
        for (&s, &q) in &self.shares {
            if let Some(bar) = ds.bar(day, s) {
                self.last_price.insert(s, px.of(bar));
            }
            value += q * self.last_price[&s];
        }
        value
    }
}

pub fn run_backtest(signals: &[DailySignal], ds: &MarketDataset, cfg: &BacktestConfig) -> Result<BacktestResult> {
    cfg.validate()?;
    let cal = ds.calendar();
    let mut by_date: Vec<&DailySignal> = signals.iter().filter(|s| !s.records.is_empty()).collect();
    by_date.sort_by_key(|s| s.date);
    let latest_before = |date: NaiveDate| -> Option<&DailySignal> {
        let i = by_date.partition_point(|s| s.date < date);
        i.checked_sub(1).map(|i| by_date[i])
    };
    let is_rebalance = |day: usize| match cfg.rebalance {
        Rebalance::Daily => true,
        Rebalance::Weekly => cal.is_week_start(day),
    };
    let start = (1..cal.len())
        .find(|&d| is_rebalance(d) && latest_before(cal.date(d)).is_some())
        .ok_or_else(|| Error::Contract("no rebalance day follows any signal".into()))?;

    let mut book = Book {
        cash: 1.0,
        shares: BTreeMap::new(),
        last_price: BTreeMap::new(),
    };
    let half = cfg.round_trip_cost / 2.0;
    let mut dates = vec![cal.date(start - 1)];
    let mut equity = vec![1.0];
    let mut trades = Vec::new();
    let mut rebalance_dates = Vec::new();
    let mut skipped = Vec::new();
    let mut total_cost = 0.0;

    for day in start..cal.len() {
        let date = cal.date(day);
        let mut value = book.mark(ds, day, cfg.execution_price);
        if is_rebalance(day) {
            if let Some(sig) = latest_before(date) {
                let mut ranked: Vec<(usize, f64)> = sig
                    .records
                    .iter()
                    .filter_map(|r| ds.stock_index(&r.stock).map(|s| (s, r.signal)))
                    .filter(|&(s, _)| ds.bar(day, s).is_some_and(|b| !b.is_limit_flagged()))
                    .collect();
                ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| ds.stocks()[a.0].cmp(&ds.stocks()[b.0])));
                if ranked.is_empty() {
                    log::warn!("{date}: no tradable stocks on rebalance day; holding");
                    skipped.push(date);
                } else {
                    let k = holdings_count(ranked.len(), cfg.top_fraction);
                    let targets: Vec<usize> = ranked[..k].iter().map(|&(s, _)| s).collect();
                    let cost = rebalance(&mut book, ds, day, cfg.execution_price, &targets, value, half, &mut trades);
                    total_cost += cost;
                    value -= cost;
                    rebalance_dates.push(date);
                }
            }
        }
        dates.push(date);
        equity.push(value);
    }

    let bench_raw: Vec<Option<f64>> = (start - 1..cal.len()).map(|d| ds.index_close(d)).collect();
    let mut benchmark = Vec::with_capacity(bench_raw.len());
    let mut last = None;
    for b in bench_raw {
        last = b.or(last);
        benchmark.push(last.ok_or_else(|| Error::Contract("benchmark index missing at backtest start".into()))?);
    }
    let b0 = benchmark[0];
    for b in &mut benchmark {
        *b /= b0;
    }
    let zip = |v: &[f64]| dates.iter().copied().zip(v.iter().copied()).collect::<Vec<_>>();
    let excess = excess_curve(&zip(&equity), &zip(&benchmark))?;
    let returns = period_returns(&equity);
    let summary = BacktestSummary {
        terminal_equity: *equity.last().expect("non-empty curve"),
        annualized_return: annualized_return(&returns, PERIODS_PER_YEAR),
        sharpe: sharpe(&returns, cfg.risk_free, PERIODS_PER_YEAR),
        max_drawdown: max_drawdown(&equity),
        excess_annualized_return: annualized_return(&period_returns(&excess), PERIODS_PER_YEAR),
        total_cost,
    };
    Ok(BacktestResult {
        dates,
        equity,
        benchmark,
        excess,
        trades,
        rebalance_dates,
        skipped_rebalances: skipped,
        summary,
    })
}

/// Moves the book to equal weights over `targets`, keeping positions that
/// cannot trade today (limit-flagged or no bar). Returns the cost charged.
#[allow(clippy::too_many_arguments)]
fn rebalance(
    book: &mut Book,
    ds: &MarketDataset,
    day: usize,
    px: ExecutionPrice,
    targets: &[usize],
    value: f64,
    half_cost: f64,
    trades: &mut Vec<Trade>,
) -> f64 {
    let date = ds.calendar().date(day);
    let tradable = |s: usize| ds.bar(day, s).is_some_and(|b| !b.is_limit_flagged());
    let current: BTreeMap<usize, f64> = book
        .shares
        .iter()
        .map(|(&s, &q)| (s, q * book.last_price[&s]))
        .collect();
    let locked: f64 = current.iter().filter(|(s, _)| !tradable(**s)).map(|(_, v)| v).sum();
    let free = value - locked;
    let per = free / targets.len() as f64;

    // Pre-cost target values define the traded notional.
    let mut desired: BTreeMap<usize, f64> = targets.iter().map(|&s| (s, per)).collect();
    for (&s, &v) in &current {
        if !tradable(s) {
            desired.insert(s, v);
        } else {
            desired.entry(s).or_insert(0.0);
        }
    }
    let notional: f64 = desired
        .iter()
        .map(|(s, &target)| (target - current.get(s).copied().unwrap_or(0.0)).abs())
        .sum();
    let cost = half_cost * notional;
    let per_after = (free - cost) / targets.len() as f64;

    let mut shares = BTreeMap::new();
    for (&s, &target_pre) in &desired {
        let before = current.get(&s).copied().unwrap_or(0.0);
        let locked_here = !tradable(s);
        let after = if locked_here {
            before
        } else if target_pre > 0.0 {
            per_after
        } else {
            0.0
        };
        if !locked_here && (target_pre - before).abs() > 0.0 {
            let trade_notional = (target_pre - before).abs();
            trades.push(Trade {
                date,
                stock: ds.stocks()[s].clone(),
                action: if target_pre > before { Action::Buy } else { Action::Sell },
                weight_change: (after - before) / value,
                notional: trade_notional,
                cost: half_cost * trade_notional,
            });
        }
        if after > 0.0 {
            let price = if locked_here {
                book.last_price[&s]
            } else {
                px.of(ds.bar(day, s).expect("tradable stock has a bar"))
            };
            book.last_price.insert(s, price);
            shares.insert(s, after / price);
        }
    }
    book.last_price.retain(|s, _| shares.contains_key(s));
    book.shares = shares;
    book.cash = 0.0;
    cost
}

impl BacktestResult {
    pub fn write_curves_csv(&self, path: &Path) -> Result<()> {
        let err = |e: csv::Error| Error::Store(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(["date", "equity", "benchmark", "excess"]).map_err(err)?;
        for i in 0..self.dates.len() {
            w.write_record([
                self.dates[i].to_string(),
                self.equity[i].to_string(),
                self.benchmark[i].to_string(),
                self.excess[i].to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_trades_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        for t in &self.trades {
            serde_json::to_writer(&mut f, t)?;
            f.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        f.flush().map_err(|e| Error::io(path, e))
    }

    pub fn render(&self) -> String {
        let pct = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{:.2}", x * 100.0));
        let s = &self.summary;
        format!(
            "{:<8}{:>10}\n{:<8}{:>10}\n{:<8}{:>10}\n{:<8}{:>10}\n{:<8}{:>10}\n",
            "AR",
            pct(s.annualized_return),
            "Sharpe",
            s.sharpe.map_or_else(|| "n/a".to_string(), |x| format!("{x:.2}")),
            "MDD",
            pct(Some(s.max_drawdown)),
            "ExAR",
            pct(s.excess_annualized_return),
            "final",
            format!("{:.4}", s.terminal_equity),
        )
    }
}
