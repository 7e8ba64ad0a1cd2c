use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::agents::{DeterministicSettings, StrategySchedule};
use crate::backtest::BacktestConfig;
use crate::dataset::{load_dataset, DatasetSchema, FeatureSubset, MarketDataset};
use crate::error::{Error, Result};
use crate::gateway::ProviderConfig;
use crate::optimizer::{AnnealConfig, Similarity};
use crate::synth::SyntheticMarket;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Deterministic,
    Llm,
    /// Decisions read back from another run's store.
    Replay,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    /// Agents see a fixed placeholder instead of the macro narrative.
    pub no_pmd: bool,
    /// Type distribution stays uniform.
    pub no_bo: bool,
    /// Signal uses consensus only (alpha = 1).
    pub no_mdh: bool,
    pub daily_pool_update: bool,
    pub daily_strategy_update: bool,
}

/// Where the market data comes from: a dataset directory or a generated
/// synthetic market.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub dir: Option<PathBuf>,
    /// Defaults to `schema.toml` inside `dir`.
    pub schema: Option<PathBuf>,
    pub synthetic: Option<SyntheticMarket>,
}

impl DataConfig {
    /// Loads the dataset. A relative `dir` resolves against `base`;
    /// without `dir` or `synthetic`, `fallback_dir` is used.
    pub fn load(&self, base: &Path, fallback_dir: Option<&Path>) -> Result<MarketDataset> {
        if let Some(synth) = &self.synthetic {
            return Ok(synth.generate());
        }
        let dir = match (&self.dir, fallback_dir) {
            (Some(d), _) => base.join(d),
            (None, Some(f)) => f.to_path_buf(),
            (None, None) => {
                return Err(Error::Config(
                    "no dataset: set data.dir, data.synthetic or MASS_DATA_DIR".into(),
                ))
            }
        };
        let schema_path = match &self.schema {
            Some(s) => base.join(s),
            None => dir.join("schema.toml"),
        };
        let schema = DatasetSchema::from_file(&schema_path)?;
        load_dataset(&dir, &schema)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n_type: usize,
    pub n_inv: usize,
    pub n_sel: usize,
    pub alpha: f64,
    pub omega_opt: usize,
    pub seed: u64,
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    /// Daily portfolio size; a fifth of the day's universe when unset.
    pub top_k: Option<usize>,
    pub similarity: Similarity,
    pub provider: ProviderKind,
    /// Store whose population and decisions a replay run reads.
    pub replay_from: Option<PathBuf>,
    /// Recorded LLM answers to serve instead of calling the endpoint.
    pub llm_fixtures: Option<PathBuf>,
    /// Cache live LLM answers inside the run store.
    pub llm_cache: bool,
    pub feature_subsets: Option<Vec<FeatureSubset>>,
    pub ablations: Ablations,
    pub anneal: AnnealConfig,
    pub deterministic: DeterministicSettings,
    pub llm: ProviderConfig,
    pub backtest: BacktestConfig,
    pub data: DataConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_type: 16,
            n_inv: 32,
            n_sel: 30,
            alpha: 0.5,
            omega_opt: 5,
            seed: 0,
            start: None,
            end: None,
            top_k: None,
            similarity: Similarity::Rank,
            provider: ProviderKind::Deterministic,
            replay_from: None,
            llm_fixtures: None,
            llm_cache: true,
            feature_subsets: None,
            ablations: Ablations::default(),
            anneal: AnnealConfig::default(),
            deterministic: DeterministicSettings::default(),
            llm: ProviderConfig::default(),
            backtest: BacktestConfig::default(),
            data: DataConfig::default(),
        }
    }
}

/// Placeholder narrative shown to agents when macro context is ablated.
pub const NO_MACRO_NARRATIVE: &str = "No macroeconomic or market information is available.";

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("n_type", self.n_type), ("n_inv", self.n_inv), ("n_sel", self.n_sel), ("omega_opt", self.omega_opt)] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.top_k == Some(0) {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        if let (Some(s), Some(e)) = (self.start, self.end) {
            if e < s {
                return Err(Error::Config(format!("end {e} precedes start {s}")));
            }
        }
        if self.provider == ProviderKind::Replay && self.replay_from.is_none() {
            return Err(Error::Config("provider = \"replay\" needs replay_from".into()));
        }
        if self.provider == ProviderKind::Llm {
            self.llm.validate()?;
        }
        self.anneal.validate()?;
        self.backtest.validate()
    }

    /// Mixing weight actually applied.
    pub fn effective_alpha(&self) -> f64 {
        if self.ablations.no_mdh {
            1.0
        } else {
            self.alpha
        }
    }

    pub fn strategy_schedule(&self) -> StrategySchedule {
        if self.ablations.daily_strategy_update {
            StrategySchedule::Daily
        } else {
            StrategySchedule::Weekly
        }
    }

    /// Parses TOML text and applies `key=value` overrides on dotted paths.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: Self = doc.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, overrides).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Sorted-key JSON; the byte form stored in a run and hashed.
    pub fn canonical_json(&self) -> String {
        serde_json::to_value(self).expect("config serializes").to_string()
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

/// Sets `key` (dotted path) to `value`, read as a TOML value when it parses
/// as one and as a bare string otherwise.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let mut table = doc;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {p:?} is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Dotted paths at which two JSON documents differ.
pub fn diff_keys(a: &Value, b: &Value) -> Vec<String> {
    fn walk(a: &Value, b: &Value, prefix: &str, out: &mut Vec<String>) {
        match (a, b) {
            (Value::Object(x), Value::Object(y)) => {
                let mut keys: Vec<&String> = x.keys().chain(y.keys()).collect();
                keys.sort();
                keys.dedup();
                for k in keys {
                    let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    match (x.get(k), y.get(k)) {
                        (Some(p), Some(q)) => walk(p, q, &path, out),
                        _ => out.push(path),
                    }
                }
            }
            _ if a != b => out.push(prefix.to_string()),
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk(a, b, "", &mut out);
    out
}
