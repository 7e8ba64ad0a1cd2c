#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Mutex;

use chrono::NaiveDate;
use serde::Deserialize;

use mass_core::agents::{AgentInstance, AgentPopulation, AgentStyle, AgentType, ProviderError};
use mass_core::dataset::{DatasetSchema, FeatureSubset, FeatureView, MarketDataset, PriceBar};
use mass_core::gateway::{parse_style, ChatRequest, Transport};

/// The worked stock-selection example shipped with the prompt templates.
#[derive(Debug, Deserialize)]
pub struct SelectionFixture {
    pub date: NaiveDate,
    pub num_stocks: usize,
    pub columns: Vec<String>,
    pub descriptions: BTreeMap<String, String>,
    pub rows: BTreeMap<String, Vec<f64>>,
    pub style: String,
    pub responses: BTreeMap<String, String>,
}

impl SelectionFixture {
    pub fn load() -> Self {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/selection_example.json");
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
    }

    pub fn pool(&self) -> Vec<String> {
        self.rows.keys().cloned().collect()
    }

    pub fn features(&self) -> Vec<(String, String)> {
        self.columns.iter().map(|c| (c.clone(), self.descriptions[c].clone())).collect()
    }

    pub fn views(&self) -> Vec<FeatureView> {
        self.rows
            .iter()
            .map(|(stock, vals)| FeatureView {
                stock: stock.clone(),
                date: self.date,
                values: self.columns.iter().cloned().zip(vals.iter().map(|v| Some(*v))).collect(),
                texts: vec![],
            })
            .collect()
    }

    pub fn style(&self) -> AgentStyle {
        parse_style(&self.style).unwrap()
    }

    pub fn response(&self, key: &str) -> &str {
        &self.responses[key]
    }

    /// One-day dataset holding the example table.
    pub fn dataset(&self) -> MarketDataset {
        let mut schema = DatasetSchema::new(self.columns.clone());
        schema.descriptions = self.descriptions.clone();
        let mut b = MarketDataset::builder(schema, vec![self.date], self.pool()).unwrap();
        for (stock, vals) in &self.rows {
            b.bar(0, stock, PriceBar::flat(10.0)).unwrap();
            b.features(0, stock, vals.iter().map(|v| Some(*v)).collect()).unwrap();
        }
        b.build()
    }

    /// A single agent whose pool is the example table and who picks three.
    pub fn population(&self) -> AgentPopulation {
        AgentPopulation {
            n_inv: 1,
            n_sel: 15,
            seed: 0,
            types: vec![AgentType {
                index: 0,
                style: self.style(),
                feature_subset: FeatureSubset { columns: self.columns.clone(), text_kinds: vec![] },
            }],
            instances: vec![AgentInstance { type_index: 0, instance_index: 0, pool: self.pool(), rng_seed: 0 }],
        }
    }
}

/// Answers from a fixed script, in order, and keeps every request.
#[derive(Default)]
pub struct Scripted {
    pub answers: Mutex<Vec<Result<String, ProviderError>>>,
    pub requests: Mutex<Vec<ChatRequest>>,
}

impl Scripted {
    pub fn new(answers: Vec<Result<String, ProviderError>>) -> Self {
        let mut answers = answers;
        answers.reverse();
        Self { answers: Mutex::new(answers), requests: Mutex::new(Vec::new()) }
    }

    pub fn ok(answers: &[&str]) -> Self {
        Self::new(answers.iter().map(|a| Ok(a.to_string())).collect())
    }
}

impl Transport for Scripted {
    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        self.requests.lock().unwrap().push(req.clone());
        self.answers
            .lock()
            .unwrap()
            .pop()
            .unwrap_or_else(|| Err(ProviderError::Unavailable("script exhausted".into())))
    }
}
