use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Declares the numeric feature columns and macro indicators a dataset is
/// expected to carry, plus optional human-readable descriptions used in
/// prompts.
///
/// Stored as a small TOML file (`schema.toml` next to the data files by
/// default):
///
/// ```toml
/// features = ["E/P", "B/P"]
/// macro_indicators = ["lpr_1y"]
///
/// [descriptions]
/// "E/P" = "Earnings yield."
///
/// [macro_templates]
/// lpr_1y = "The latest 1-year loan prime rate is {value}."
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub features: Vec<String>,
    #[serde(default)]
    pub macro_indicators: Vec<String>,
    #[serde(default)]
    pub descriptions: BTreeMap<String, String>,
    #[serde(default)]
    pub macro_templates: BTreeMap<String, String>,
}

impl DatasetSchema {
    pub fn new(features: Vec<String>) -> Self {
        Self {
            features,
            ..Self::default()
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let schema: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for f in &self.features {
            if f.is_empty() {
                return Err(Error::Config("empty feature name in schema".into()));
            }
            if !seen.insert(f) {
                return Err(Error::Config(format!("duplicate feature {f:?} in schema")));
            }
        }
        Ok(())
    }

    pub fn feature_position(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f == name)
    }

    pub fn description(&self, feature: &str) -> &str {
        self.descriptions
            .get(feature)
            .map(String::as_str)
            .unwrap_or("")
    }
}
