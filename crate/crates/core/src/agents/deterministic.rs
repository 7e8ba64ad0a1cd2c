//! Seeded stand-in for the language-model provider.
//!
//! Each agent type scores the stocks in its pool with a type-specific linear
//! functional of the (cross-sectionally standardized) visible numeric
//! features, adds Gaussian noise scaled by `(1 - rationality) * noise_scale`,
//! and picks the top scores.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    AgentStyle, DecisionProvider, HoldingPeriod, PoolSelector, ProviderError, RiskAppetite,
    SelectionRequest, StrategyRequest, StyleRequest,
};
use crate::seed;

const STYLE_DOMAIN: u64 = 0x51;
const WEIGHT_DOMAIN: u64 = 0x77;
const NOISE_DOMAIN: u64 = 0xa3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeterministicSettings {
    pub noise_scale: f64,
    /// Rationality of generated styles is drawn uniformly from this range.
    pub rationality: (f64, f64),
    /// Explicit per-type feature weights (type index -> column -> weight).
    /// When non-empty, unlisted types and columns weigh zero; when empty,
    /// every weight is a seeded standard-normal draw.
    pub weights: Vec<BTreeMap<String, f64>>,
    /// Draw pool selectors across all four kinds instead of always `Random`.
    pub mixed_selectors: bool,
}

impl Default for DeterministicSettings {
    fn default() -> Self {
        Self {
            noise_scale: 1.0,
            rationality: (0.3, 1.0),
            weights: Vec::new(),
            mixed_selectors: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DeterministicProvider {
    seed: u64,
    settings: DeterministicSettings,
}

impl DeterministicProvider {
    pub fn new(seed: u64) -> Self {
        Self::with_settings(seed, DeterministicSettings::default())
    }

    pub fn with_settings(seed: u64, settings: DeterministicSettings) -> Self {
        Self { seed, settings }
    }

    pub fn settings(&self) -> &DeterministicSettings {
        &self.settings
    }

    fn weight(&self, type_index: usize, column: &str) -> f64 {
        if self.settings.weights.is_empty() {
            let s = seed::derive(self.seed, &[WEIGHT_DOMAIN, type_index as u64, seed::fnv1a(column)]);
            ChaCha8Rng::seed_from_u64(s).sample(StandardNormal)
        } else {
            self.settings
                .weights
                .get(type_index)
                .and_then(|w| w.get(column))
                .copied()
                .unwrap_or(0.0)
        }
    }
}

impl DecisionProvider for DeterministicProvider {
    fn id(&self) -> &str {
        "deterministic"
    }

    fn generate_style(&self, req: &StyleRequest<'_>) -> Result<AgentStyle, ProviderError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(self.seed, &[STYLE_DOMAIN, req.type_index as u64]));
        let (lo, hi) = self.settings.rationality;
        let rationality = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        let pool_selector = if self.settings.mixed_selectors {
            match rng.gen_range(0..3) {
                0 => PoolSelector::Random,
                1 => PoolSelector::IndustryEqual,
                _ => PoolSelector::MvEqual,
            }
        } else {
            PoolSelector::Random
        };
        let columns: Vec<&str> = req.features.iter().map(|(c, _)| c.as_str()).collect();
        Ok(AgentStyle {
            outline: format!("Systematic type {} ranking stocks on {}.", req.type_index, columns.join(", ")),
            risk_appetite: RiskAppetite::ALL[rng.gen_range(0..5)],
            holding_period: HoldingPeriod::ALL[rng.gen_range(0..5)],
            strategy_consistency: rng.gen_range(0.5..=1.0),
            rationality: rationality.clamp(0.0, 1.0),
            pool_selector,
            others: String::new(),
        })
    }

    fn generate_strategy(&self, req: &StrategyRequest<'_>) -> Result<String, ProviderError> {
        Ok(format!(
            "{} As of {}: {}",
            req.style.outline,
            req.date,
            if req.macro_narrative.is_empty() { "no macro context" } else { req.macro_narrative }
        ))
    }

    fn select_stocks(&self, req: &SelectionRequest<'_>) -> Result<Vec<String>, ProviderError> {
        let n_cols = req.rows.first().map_or(0, |r| r.values.len());
        // Standardize each visible column across the pool; missing cells score 0.
        let mut z = vec![vec![0.0; n_cols]; req.rows.len()];
        for c in 0..n_cols {
            let vals: Vec<f64> = req.rows.iter().filter_map(|r| r.values[c].1).collect();
            if vals.is_empty() {
                continue;
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            let sd = var.sqrt();
            for (r, row) in req.rows.iter().enumerate() {
                if let (Some(v), true) = (row.values[c].1, sd > 0.0) {
                    z[r][c] = (v - mean) / sd;
                }
            }
        }
        let weights: Vec<f64> = req
            .rows
            .first()
            .map(|r| r.values.iter().map(|(name, _)| self.weight(req.type_index, name)).collect())
            .unwrap_or_default();
        let noise_sd = (1.0 - req.style.rationality).max(0.0) * self.settings.noise_scale;
        let date_key = seed::fnv1a(&req.date.to_string());

        let mut scored: Vec<(f64, &str)> = req
            .rows
            .iter()
            .zip(&z)
            .map(|(row, zs)| {
                let signal: f64 = zs.iter().zip(&weights).map(|(a, b)| a * b).sum();
                let s = seed::derive(
                    self.seed,
                    &[NOISE_DOMAIN, req.type_index as u64, req.instance_index as u64, date_key, seed::fnv1a(&row.stock)],
                );
                let eps: f64 = ChaCha8Rng::seed_from_u64(s).sample(StandardNormal);
                (signal + noise_sd * eps, row.stock.as_str())
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        Ok(scored
            .into_iter()
            .take(req.num_stocks)
            .map(|(_, s)| s.to_string())
            .collect())
    }
}
