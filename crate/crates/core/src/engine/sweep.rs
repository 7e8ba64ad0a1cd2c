use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{evaluate_signals, run_simulation, RunConfig, RunOptions, RunStore};
use crate::dataset::MarketDataset;
use crate::error::{Error, Result};

/// Population size of one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentCount {
    pub n_type: usize,
    pub n_inv: usize,
}

impl AgentCount {
    pub fn total(&self) -> usize {
        self.n_type * self.n_inv
    }

    /// Splits `n` agents over at most `max_types` types; `n` must be a
    /// multiple of the resulting type count.
    pub fn split(n: usize, max_types: usize) -> Result<Self> {
        let n_type = max_types.min(n).max(1);
        if n == 0 || !n.is_multiple_of(n_type) {
            return Err(Error::Config(format!("{n} agents do not split evenly over {n_type} types")));
        }
        Ok(Self { n_type, n_inv: n / n_type })
    }

    /// Parses `"64"` (split over at most `max_types` types) or `"4x16"`.
    pub fn parse(text: &str, max_types: usize) -> Result<Self> {
        let t = text.trim();
        let bad = || Error::Config(format!("bad agent count {t:?}: expected N or TxI"));
        match t.split_once(['x', 'X']) {
            Some((a, b)) => {
                let n_type = usize::from_str(a.trim()).map_err(|_| bad())?;
                let n_inv = usize::from_str(b.trim()).map_err(|_| bad())?;
                if n_type == 0 || n_inv == 0 {
                    return Err(bad());
                }
                Ok(Self { n_type, n_inv })
            }
            None => Self::split(usize::from_str(t).map_err(|_| bad())?, max_types),
        }
    }

    /// Comma-separated list, e.g. `"16,32,64"`.
    pub fn parse_list(text: &str, max_types: usize) -> Result<Vec<Self>> {
        let counts: Vec<Self> = text.split(',').map(|c| Self::parse(c, max_types)).collect::<Result<_>>()?;
        if counts.is_empty() {
            return Err(Error::Config("empty agent count list".into()));
        }
        Ok(counts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_type: usize,
    pub n_inv: usize,
    pub n_agents: usize,
    pub mean_ric: Option<f64>,
    pub ricir: Option<f64>,
    pub mean_ic: Option<f64>,
    pub days: usize,
    /// Why the point has no result.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

/// One simulation per agent count, each in its own sub-store of `out`, all
/// sharing the base configuration's seeds.
pub fn scaling_sweep(
    ds: &MarketDataset,
    base: &RunConfig,
    counts: &[AgentCount],
    out: &Path,
    opts: RunOptions,
) -> Result<SweepReport> {
    if counts.windows(2).any(|w| w[1].total() < w[0].total()) {
        return Err(Error::Config("agent counts must be ascending in total size".into()));
    }
    let mut rows = Vec::with_capacity(counts.len());
    for c in counts {
        let config = RunConfig { n_type: c.n_type, n_inv: c.n_inv, ..base.clone() };
        let dir = out.join(format!("agents_{}x{}", c.n_type, c.n_inv));
        let mut row = SweepRow {
            n_type: c.n_type,
            n_inv: c.n_inv,
            n_agents: c.total(),
            mean_ric: None,
            ricir: None,
            mean_ic: None,
            days: 0,
            failure: None,
        };
        let result = run_simulation(ds, &config, &dir, opts).and_then(|_| RunStore::new(&dir).read_signals());
        match result {
            Ok(signals) => {
                let report = evaluate_signals(ds, &signals);
                row.days = report.daily.len();
                if !report.is_empty() {
                    row.mean_ric = report.mean_ric;
                    row.mean_ic = report.mean_ic;
                    row.ricir = report.ricir;
                }
            }
            Err(e) => {
                log::warn!("sweep point {}x{} failed: {e}", c.n_type, c.n_inv);
                row.failure = Some(e.to_string());
            }
        }
        rows.push(row);
    }
    let report = SweepReport { rows };
    write_sweep_csv(&out.join("sweep.csv"), &report)?;
    Ok(report)
}

pub fn write_sweep_csv(path: &Path, report: &SweepReport) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let err = |e: csv::Error| Error::Store(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["n_type", "n_inv", "n_agents", "log2_agents", "mean_ric", "ricir", "mean_ic", "days", "failure"])
        .map_err(err)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in &report.rows {
        w.write_record([
            r.n_type.to_string(),
            r.n_inv.to_string(),
            r.n_agents.to_string(),
            (r.n_agents as f64).log2().to_string(),
            opt(r.mean_ric),
            opt(r.ricir),
            opt(r.mean_ic),
            r.days.to_string(),
            r.failure.clone().unwrap_or_default(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_parsing() {
        assert_eq!(AgentCount::parse("64", 16).unwrap(), AgentCount { n_type: 16, n_inv: 4 });
        assert_eq!(AgentCount::parse("8", 16).unwrap(), AgentCount { n_type: 8, n_inv: 1 });
        assert_eq!(AgentCount::parse("4x16", 16).unwrap(), AgentCount { n_type: 4, n_inv: 16 });
        assert!(AgentCount::parse("24", 16).is_err());
        assert!(AgentCount::parse_list("a,b", 16).is_err());
        assert_eq!(AgentCount::parse_list("16,32,64,128,256,512", 16).unwrap().len(), 6);
    }
}
