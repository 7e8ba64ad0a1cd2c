//! Factor-quality and portfolio-performance statistics.
//!
//! Standard deviations use the population form throughout. Undefined values
//! (constant inputs, empty series) are `None`, never a silent zero.

use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PERIODS_PER_YEAR: u32 = 252;

/// Fewest paired observations a day needs to be scored.
pub const MIN_CROSS_SECTION: usize = 3;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn population_std(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

fn is_constant(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[0] == w[1])
}

/// Pearson correlation; `None` for mismatched or short inputs, or when
/// either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 || is_constant(x) || is_constant(y) {
        return None;
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) hold ranks i+1..=j
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Spearman rank correlation: Pearson of the average-rank vectors.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() {
        return None;
    }
    rank_pearson(&average_ranks(x), &average_ranks(y))
}

/// Pearson correlation of two average-rank vectors (as produced by
/// [`average_ranks`]). Doubled average ranks are integers, so the moments are
/// accumulated exactly and the result is rounded once when both sides have
/// the same spread (always the case without ties).
pub fn rank_pearson(rx: &[f64], ry: &[f64]) -> Option<f64> {
    let n = rx.len();
    if n != ry.len() || n < 2 {
        return None;
    }
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0i128, 0i128, 0i128, 0i128, 0i128);
    for (a, b) in rx.iter().zip(ry) {
        let (a, b) = ((2.0 * a) as i128, (2.0 * b) as i128);
        sx += a;
        sy += b;
        sxx += a * a;
        syy += b * b;
        sxy += a * b;
    }
    let n = n as i128;
    let cov = n * sxy - sx * sy;
    let vx = n * sxx - sx * sx;
    let vy = n * syy - sy * sy;
    if vx == 0 || vy == 0 {
        return None;
    }
    let r = if vx == vy {
        cov as f64 / vx as f64
    } else {
        cov as f64 / ((vx as f64) * (vy as f64)).sqrt()
    };
    Some(r.clamp(-1.0, 1.0))
}

/// One day's paired signal and realized-return vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyCrossSection {
    pub date: NaiveDate,
    pub signal: Vec<f64>,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyFactor {
    pub date: NaiveDate,
    pub n: usize,
    pub ic: Option<f64>,
    pub ric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub daily: Vec<DailyFactor>,
    pub mean_ic: Option<f64>,
    pub mean_ric: Option<f64>,
    pub icir: Option<f64>,
    pub ricir: Option<f64>,
    /// Days with fewer than three pairs or a constant side.
    pub skipped_days: usize,
}

fn summarize(series: &[f64]) -> (Option<f64>, Option<f64>) {
    if series.is_empty() {
        return (None, None);
    }
    let m = mean(series);
    let sd = population_std(series);
    (Some(m), (sd > 0.0).then(|| m / sd))
}

pub fn factor_report(sections: &[DailyCrossSection]) -> MetricReport {
    let mut daily = Vec::new();
    let mut skipped_days = 0;
    for s in sections {
        let n = s.signal.len().min(s.returns.len());
        let usable = n >= MIN_CROSS_SECTION
            && s.signal.len() == s.returns.len()
            && !is_constant(&s.signal)
            && !is_constant(&s.returns);
        if !usable {
            skipped_days += 1;
            continue;
        }
        daily.push(DailyFactor {
            date: s.date,
            n,
            ic: pearson(&s.signal, &s.returns),
            ric: spearman(&s.signal, &s.returns),
        });
    }
    let ics: Vec<f64> = daily.iter().filter_map(|d| d.ic).collect();
    let rics: Vec<f64> = daily.iter().filter_map(|d| d.ric).collect();
    let (mean_ic, icir) = summarize(&ics);
    let (mean_ric, ricir) = summarize(&rics);
    MetricReport {
        daily,
        mean_ic,
        mean_ric,
        icir,
        ricir,
        skipped_days,
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{:.2}", x * 100.0))
}

fn plain(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.2}"))
}

impl MetricReport {
    pub fn is_empty(&self) -> bool {
        self.daily.is_empty()
    }

    /// Human-readable table; correlations are shown in percentage points,
    /// information ratios as plain numbers.
    pub fn render(&self) -> String {
        if self.is_empty() {
            return format!("factor metrics: no usable days ({} skipped)\n", self.skipped_days);
        }
        format!(
            "{:<8}{:>10}\n{:<8}{:>10}\n{:<8}{:>10}\n{:<8}{:>10}\n{:<8}{:>10}\n{:<8}{:>10}\n",
            "IC",
            pct(self.mean_ic),
            "ICIR",
            plain(self.icir),
            "RIC",
            pct(self.mean_ric),
            "RICIR",
            plain(self.ricir),
            "days",
            self.daily.len(),
            "skipped",
            self.skipped_days,
        )
    }

    pub fn write_daily_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Store(format!("{}: {e}", path.display())))?;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        let run = |w: &mut csv::Writer<std::fs::File>| -> csv::Result<()> {
            w.write_record(["date", "n", "ic", "ric"])?;
            for d in &self.daily {
                w.write_record([d.date.to_string(), d.n.to_string(), opt(d.ic), opt(d.ric)])?;
            }
            w.flush()?;
            Ok(())
        };
        run(&mut w).map_err(|e| Error::Store(format!("{}: {e}", path.display())))
    }

    /// `(metric, value, units)` rows for the machine-readable summary.
    pub fn summary_rows(&self) -> Vec<SummaryRow> {
        vec![
            SummaryRow::new("mean_ic", self.mean_ic, "fraction"),
            SummaryRow::new("icir", self.icir, "ratio"),
            SummaryRow::new("mean_ric", self.mean_ric, "fraction"),
            SummaryRow::new("ricir", self.ricir, "ratio"),
            SummaryRow::new("usable_days", Some(self.daily.len() as f64), "days"),
            SummaryRow::new("skipped_days", Some(self.skipped_days as f64), "days"),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub metric: String,
    pub value: Option<f64>,
    pub units: String,
}

impl SummaryRow {
    pub fn new(metric: &str, value: Option<f64>, units: &str) -> Self {
        Self {
            metric: metric.to_string(),
            value,
            units: units.to_string(),
        }
    }
}

pub fn write_summary_jsonl(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for r in rows {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Compounded growth scaled to `periods_per_year`; `None` for an empty
/// series or a period return at or below -100%.
pub fn annualized_return(returns: &[f64], periods_per_year: u32) -> Option<f64> {
    if returns.is_empty() || returns.iter().any(|r| *r <= -1.0) {
        return None;
    }
    let growth: f64 = returns.iter().map(|r| 1.0 + r).product();
    Some(growth.powf(f64::from(periods_per_year) / returns.len() as f64) - 1.0)
}

/// Largest peak-to-trough decline as a fraction of the peak.
pub fn max_drawdown(equity: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0_f64;
    for &v in equity {
        peak = peak.max(v);
        worst = worst.max(1.0 - v / peak);
    }
    worst
}

/// Annualized Sharpe ratio; `None` with fewer than two periods or zero
/// volatility.
pub fn sharpe(returns: &[f64], risk_free: f64, periods_per_year: u32) -> Option<f64> {
    if returns.len() < 2 || is_constant(returns) {
        return None;
    }
    let excess: Vec<f64> = returns.iter().map(|r| r - risk_free).collect();
    let sd = population_std(returns);
    (sd > 0.0).then(|| mean(&excess) / sd * f64::from(periods_per_year).sqrt())
}

/// Simple returns between consecutive points of a value curve.
pub fn period_returns(curve: &[f64]) -> Vec<f64> {
    curve.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
}
