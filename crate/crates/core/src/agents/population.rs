use chrono::NaiveDate;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{select_pool, AgentStyle, DecisionProvider, PoolCandidate, StyleRequest};
use crate::dataset::{DatasetSchema, FeatureSubset, MarketDataset, StockId, TextKind};
use crate::error::{Error, Result};
use crate::seed;

const SUBSET_DOMAIN: u64 = 0x5b;
const POOL_DOMAIN: u64 = 0x9f;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub n_type: usize,
    pub n_inv: usize,
    pub n_sel: usize,
    pub seed: u64,
    /// Explicit per-type visible features; drawn at random when absent.
    pub feature_subsets: Option<Vec<FeatureSubset>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentType {
    pub index: usize,
    pub style: AgentStyle,
    pub feature_subset: FeatureSubset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentInstance {
    pub type_index: usize,
    pub instance_index: usize,
    pub pool: Vec<StockId>,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPopulation {
    pub n_inv: usize,
    pub n_sel: usize,
    pub seed: u64,
    pub types: Vec<AgentType>,
    /// Type-major: instance `(i, k)` lives at `i * n_inv + k`.
    pub instances: Vec<AgentInstance>,
}

impl AgentPopulation {
    pub fn n_type(&self) -> usize {
        self.types.len()
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn instance(&self, type_index: usize, instance_index: usize) -> &AgentInstance {
        &self.instances[type_index * self.n_inv + instance_index]
    }

    /// Re-draws every pool with a day-specific seed (daily pool update mode).
    pub fn redraw_pools(&mut self, ds: &MarketDataset, day: usize) -> Result<()> {
        let candidates = candidates(ds);
        let seed = self.seed;
        let n_sel = self.n_sel;
        let styles: Vec<AgentStyle> = self.types.iter().map(|t| t.style.clone()).collect();
        self.instances.par_iter_mut().try_for_each(|inst| {
            let s = seed::derive(seed, &[POOL_DOMAIN, inst.type_index as u64, inst.instance_index as u64, day as u64 + 1]);
            let draw = select_pool(&styles[inst.type_index].pool_selector, &candidates, n_sel, s)?;
            inst.pool = draw.stocks;
            inst.rng_seed = s;
            Ok(())
        })
    }
}

/// Feature columns of a subset paired with their schema descriptions.
pub(crate) fn described(schema: &DatasetSchema, subset: &FeatureSubset) -> Vec<(String, String)> {
    subset
        .columns
        .iter()
        .map(|c| (c.clone(), schema.description(c).to_string()))
        .collect()
}

fn candidates(ds: &MarketDataset) -> Vec<PoolCandidate> {
    ds.stocks()
        .iter()
        .enumerate()
        .map(|(i, s)| PoolCandidate {
            stock: s.clone(),
            industry: ds.meta(i).industry.clone(),
            market_cap: ds.meta(i).market_cap,
        })
        .collect()
}

/// Random subset holding 25%-75% of the declared columns (at least one),
/// plus each text kind with probability one half.
fn draw_subset(schema: &DatasetSchema, seed: u64) -> FeatureSubset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = schema.features.len();
    let columns = if n == 0 {
        Vec::new()
    } else {
        let lo = ((n as f64 * 0.25).ceil() as usize).clamp(1, n);
        let hi = ((n as f64 * 0.75).floor() as usize).clamp(lo, n);
        let size = rng.gen_range(lo..=hi);
        let mut idx = sample(&mut rng, n, size).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| schema.features[i].clone()).collect()
    };
    let text_kinds = [TextKind::News, TextKind::Report]
        .into_iter()
        .filter(|_| rng.gen_bool(0.5))
        .collect();
    FeatureSubset { columns, text_kinds }
}

pub fn build_population(
    ds: &MarketDataset,
    spec: &PopulationSpec,
    provider: &dyn DecisionProvider,
    date: NaiveDate,
    macro_narrative: &str,
) -> Result<AgentPopulation> {
    if spec.n_type == 0 || spec.n_inv == 0 || spec.n_sel == 0 {
        return Err(Error::Config("n_type, n_inv and n_sel must all be at least 1".into()));
    }
    let schema = ds.schema();
    let subsets: Vec<FeatureSubset> = match &spec.feature_subsets {
        Some(explicit) => {
            if explicit.len() != spec.n_type {
                return Err(Error::Config(format!(
                    "{} feature subsets given for {} agent types",
                    explicit.len(),
                    spec.n_type
                )));
            }
            explicit
                .iter()
                .map(|s| s.clone().validated(schema))
                .collect::<Result<_>>()?
        }
        None => (0..spec.n_type)
            .map(|i| draw_subset(schema, seed::derive(spec.seed, &[SUBSET_DOMAIN, i as u64])))
            .collect(),
    };
    if spec.n_sel > ds.stocks().len() {
        log::warn!(
            "n_sel {} exceeds the {}-stock universe; pools are the full universe",
            spec.n_sel,
            ds.stocks().len()
        );
    }

    let types: Vec<AgentType> = subsets
        .into_par_iter()
        .enumerate()
        .map(|(index, feature_subset)| {
            let features = described(schema, &feature_subset);
            let style = provider.generate_style(&StyleRequest {
                type_index: index,
                date,
                features: &features,
                macro_narrative,
            })?;
            Ok(AgentType {
                index,
                style,
                feature_subset,
            })
        })
        .collect::<Result<_>>()?;

    let candidates = candidates(ds);
    let instances = (0..spec.n_type * spec.n_inv)
        .into_par_iter()
        .map(|flat| {
            let (i, k) = (flat / spec.n_inv, flat % spec.n_inv);
            let rng_seed = seed::derive(spec.seed, &[POOL_DOMAIN, i as u64, k as u64]);
            let draw = select_pool(&types[i].style.pool_selector, &candidates, spec.n_sel, rng_seed)?;
            Ok(AgentInstance {
                type_index: i,
                instance_index: k,
                pool: draw.stocks,
                rng_seed,
            })
        })
        .collect::<Result<_>>()?;

    Ok(AgentPopulation {
        n_inv: spec.n_inv,
        n_sel: spec.n_sel,
        seed: spec.seed,
        types,
        instances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::DeterministicProvider;
    use crate::synth::SyntheticMarket;

    fn spec(n_type: usize, n_inv: usize, n_sel: usize) -> PopulationSpec {
        PopulationSpec {
            n_type,
            n_inv,
            n_sel,
            seed: 11,
            feature_subsets: None,
        }
    }

    #[test]
    fn paper_scale_population() {
        let ds = SyntheticMarket { n_stocks: 300, n_days: 3, ..SyntheticMarket::default() }.generate();
        let provider = DeterministicProvider::new(1);
        let pop = build_population(&ds, &spec(16, 32, 30), &provider, ds.calendar().date(0), "macro").unwrap();
        assert_eq!(pop.len(), 512);
        assert!(pop.instances.iter().all(|a| a.pool.len() == 30));
        assert_eq!(pop.instance(3, 5).type_index, 3);
        assert_eq!(pop.instance(3, 5).instance_index, 5);
    }

    #[test]
    fn degenerate_population() {
        let ds = SyntheticMarket { n_stocks: 10, n_days: 3, ..SyntheticMarket::default() }.generate();
        let provider = DeterministicProvider::new(1);
        let pop = build_population(&ds, &spec(1, 1, 4), &provider, ds.calendar().date(0), "macro").unwrap();
        assert_eq!(pop.len(), 1);
        assert_eq!(pop.n_type(), 1);
    }

    #[test]
    fn oversized_pool_is_whole_universe() {
        let ds = SyntheticMarket { n_stocks: 10, n_days: 3, ..SyntheticMarket::default() }.generate();
        let provider = DeterministicProvider::new(1);
        let pop = build_population(&ds, &spec(2, 2, 40), &provider, ds.calendar().date(0), "macro").unwrap();
        assert!(pop.instances.iter().all(|a| a.pool.len() == 10));
    }

    #[test]
    fn same_seed_same_population() {
        let ds = SyntheticMarket { n_stocks: 50, n_days: 3, n_features: 6, ..SyntheticMarket::default() }.generate();
        let provider = DeterministicProvider::new(9);
        let a = build_population(&ds, &spec(4, 3, 8), &provider, ds.calendar().date(0), "m").unwrap();
        let b = build_population(&ds, &spec(4, 3, 8), &provider, ds.calendar().date(0), "m").unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn random_subsets_respect_bounds() {
        let schema = DatasetSchema::new((0..8).map(|i| format!("f{i}")).collect());
        for s in 0..50 {
            let sub = draw_subset(&schema, s);
            assert!((2..=6).contains(&sub.columns.len()), "{:?}", sub.columns);
            assert!(sub.clone().validated(&schema).unwrap() == sub);
        }
    }

    #[test]
    fn explicit_subsets_are_validated() {
        let ds = SyntheticMarket { n_stocks: 10, n_days: 3, ..SyntheticMarket::default() }.generate();
        let provider = DeterministicProvider::new(1);
        let mut sp = spec(1, 1, 4);
        sp.feature_subsets = Some(vec![FeatureSubset { columns: vec!["nope".into()], text_kinds: vec![] }]);
        let err = build_population(&ds, &sp, &provider, ds.calendar().date(0), "m").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
