//! On-disk layout of one run:
//!
//! ```text
//! config.json             canonical run configuration
//! population.json         agent types and instance pools
//! strategies/<date>.json  each type's strategy in force on that day
//! decisions/<date>.jsonl  one selection record per agent instance
//! snapshots/<date>.json   distribution, objective and portfolio of the day
//! signals.csv             per-stock signal rows, all days
//! ```
//!
//! Every file is written to a temporary name and renamed into place, so an
//! interrupted run never leaves a half-written artifact behind.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::RunConfig;
use crate::agents::{read_decision_cache, write_decision_cache, AgentPopulation, DailyStrategy, DecisionRecord, SelectionReport};
use crate::aggregation::{read_signals_csv, write_signals_csv, DailySignal, Portfolio, TypeDistribution};
use crate::error::{Error, Result};

pub const CONFIG_FILE: &str = "config.json";
pub const POPULATION_FILE: &str = "population.json";
pub const SIGNALS_FILE: &str = "signals.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum DayStatus {
    Ok,
    Failed { reason: String },
}

/// State persisted at the end of each simulated day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaySnapshot {
    pub date: NaiveDate,
    #[serde(flatten)]
    pub status: DayStatus,
    /// Distribution after the day's backward optimization.
    pub distribution: TypeDistribution,
    /// Distribution the day's signal was aggregated with.
    pub signal_distribution: TypeDistribution,
    pub alpha: f64,
    /// Objective of `distribution` over the day's look-back window, if any.
    pub objective: Option<f64>,
    pub initial_objective: Option<f64>,
    /// Label dates the day's optimizer window held.
    pub window_label_dates: Vec<NaiveDate>,
    pub decisions: Option<String>,
    pub portfolio: Portfolio,
    pub selection: SelectionReport,
}

impl DaySnapshot {
    pub fn is_ok(&self) -> bool {
        self.status == DayStatus::Ok
    }
}

#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

fn date_name(date: NaiveDate, ext: &str) -> String {
    format!("{}.{ext}", date.format("%Y-%m-%d"))
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingFile(path.display().to_string()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

/// Dates of the `<date>.<ext>` files in `dir`, ascending.
fn dated_files(dir: &Path, ext: &str) -> Result<Vec<NaiveDate>> {
    let Ok(entries) = std::fs::read_dir(dir) else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(&format!(".{ext}")) {
            if let Ok(d) = NaiveDate::parse_from_str(stem, "%Y-%m-%d") {
                out.push(d);
            }
        }
    }
    out.sort();
    Ok(out)
}

impl RunStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn exists(&self) -> bool {
        self.root.join(CONFIG_FILE).exists()
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join(CONFIG_FILE)
    }

    pub fn signals_path(&self) -> PathBuf {
        self.root.join(SIGNALS_FILE)
    }

    pub fn decisions_path(&self, date: NaiveDate) -> PathBuf {
        self.root.join("decisions").join(date_name(date, "jsonl"))
    }

    pub fn snapshot_path(&self, date: NaiveDate) -> PathBuf {
        self.root.join("snapshots").join(date_name(date, "json"))
    }

    pub fn strategies_path(&self, date: NaiveDate) -> PathBuf {
        self.root.join("strategies").join(date_name(date, "json"))
    }

    pub fn trace_path(&self, date: NaiveDate) -> PathBuf {
        self.root.join("traces").join(date_name(date, "csv"))
    }

    pub fn write_config(&self, config: &RunConfig) -> Result<()> {
        let mut text = config.canonical_json();
        text.push('\n');
        write_atomic(&self.config_path(), text.as_bytes())
    }

    /// The stored configuration as raw JSON.
    pub fn read_config_value(&self) -> Result<serde_json::Value> {
        read_json(&self.config_path())
    }

    pub fn read_config(&self) -> Result<RunConfig> {
        read_json(&self.config_path())
    }

    pub fn write_population(&self, population: &AgentPopulation) -> Result<()> {
        write_json(&self.root.join(POPULATION_FILE), population)
    }

    pub fn read_population(&self) -> Result<AgentPopulation> {
        read_json(&self.root.join(POPULATION_FILE))
    }

    pub fn has_population(&self) -> bool {
        self.root.join(POPULATION_FILE).exists()
    }

    pub fn write_strategies(&self, date: NaiveDate, strategies: &[DailyStrategy]) -> Result<()> {
        write_json(&self.strategies_path(date), &strategies)
    }

    pub fn read_strategies(&self, date: NaiveDate) -> Result<Vec<DailyStrategy>> {
        read_json(&self.strategies_path(date))
    }

    pub fn write_decisions(&self, date: NaiveDate, records: &[DecisionRecord]) -> Result<()> {
        write_decision_cache(&self.decisions_path(date), records)
    }

    pub fn read_decisions(&self, date: NaiveDate) -> Result<Vec<DecisionRecord>> {
        let path = self.decisions_path(date);
        if !path.exists() {
            return Err(Error::MissingFile(path.display().to_string()));
        }
        read_decision_cache(&path)
    }

    pub fn write_snapshot(&self, snapshot: &DaySnapshot) -> Result<()> {
        write_json(&self.snapshot_path(snapshot.date), snapshot)
    }

    pub fn read_snapshot(&self, date: NaiveDate) -> Result<DaySnapshot> {
        read_json(&self.snapshot_path(date))
    }

    pub fn snapshot_dates(&self) -> Result<Vec<NaiveDate>> {
        dated_files(&self.root.join("snapshots"), "json")
    }

    pub fn snapshots(&self) -> Result<Vec<DaySnapshot>> {
        self.snapshot_dates()?.into_iter().map(|d| self.read_snapshot(d)).collect()
    }

    pub fn write_signals(&self, signals: &[DailySignal]) -> Result<()> {
        let path = self.signals_path();
        let tmp = path.with_extension("partial");
        write_signals_csv(&tmp, signals)?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    /// Stored signals; an absent file means no day has produced one yet.
    pub fn read_signals(&self) -> Result<Vec<DailySignal>> {
        if !self.signals_path().exists() {
            return Ok(Vec::new());
        }
        read_signals_csv(&self.signals_path())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip_and_listing() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::new(dir.path());
        let snap = |d: u32, status: DayStatus| DaySnapshot {
            date: NaiveDate::from_ymd_opt(2023, 1, d).unwrap(),
            status,
            distribution: TypeDistribution::uniform(2),
            signal_distribution: TypeDistribution::uniform(2),
            alpha: 0.5,
            objective: None,
            initial_objective: None,
            window_label_dates: vec![],
            decisions: None,
            portfolio: Portfolio { holdings: vec![] },
            selection: SelectionReport::default(),
        };
        store.write_snapshot(&snap(4, DayStatus::Failed { reason: "x".into() })).unwrap();
        store.write_snapshot(&snap(3, DayStatus::Ok)).unwrap();
        let all = store.snapshots().unwrap();
        assert_eq!(all.len(), 2);
        assert!(all[0].is_ok());
        assert_eq!(all[1].status, DayStatus::Failed { reason: "x".into() });
        assert!(matches!(store.read_snapshot(NaiveDate::from_ymd_opt(2023, 1, 5).unwrap()), Err(Error::MissingFile(_))));
    }
}
