//! Candidate-pool selectors.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PoolSelector;
use crate::dataset::StockId;
use crate::error::{Error, Result};

/// Market-cap buckets used by [`PoolSelector::MvEqual`].
const MV_BUCKETS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct PoolCandidate {
    pub stock: StockId,
    pub industry: Option<String>,
    pub market_cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolDraw {
    /// Sorted stock ids.
    pub stocks: Vec<StockId>,
    /// The universe was not larger than `n_sel`, so the whole universe was taken.
    pub whole_universe: bool,
    /// `IndustryBasis` had too few stocks and a uniform draw was used instead.
    pub fell_back: bool,
}

pub fn select_pool(
    selector: &PoolSelector,
    universe: &[PoolCandidate],
    n_sel: usize,
    seed: u64,
) -> Result<PoolDraw> {
    if n_sel == 0 {
        return Err(Error::Config("n_sel must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let need_industry = matches!(selector, PoolSelector::IndustryEqual | PoolSelector::IndustryBasis(_));
    if need_industry {
        if let Some(c) = universe.iter().find(|c| c.industry.is_none()) {
            return Err(Error::Config(format!(
                "{} needs industry metadata; {} has none",
                selector.name(),
                c.stock
            )));
        }
    }
    if matches!(selector, PoolSelector::MvEqual) {
        if let Some(c) = universe.iter().find(|c| c.market_cap.is_none()) {
            return Err(Error::Config(format!(
                "{} needs market-cap metadata; {} has none",
                selector.name(),
                c.stock
            )));
        }
    }

    if n_sel >= universe.len() {
        if n_sel > universe.len() {
            log::warn!("n_sel {n_sel} exceeds universe size {}; pool is the full universe", universe.len());
        }
        return Ok(finish(universe.iter().collect(), true, false));
    }

    let picked: Vec<&PoolCandidate> = match selector {
        PoolSelector::Random => random(universe, n_sel, &mut rng),
        PoolSelector::IndustryEqual => {
            let mut groups: Vec<Vec<&PoolCandidate>> = by_industry(universe.iter()).into_values().collect();
            for g in &mut groups {
                g.shuffle(&mut rng);
            }
            // Industries that receive the extra picks are chosen at random.
            groups.shuffle(&mut rng);
            round_robin(groups, n_sel)
        }
        PoolSelector::MvEqual => mv_equal(universe, n_sel, &mut rng),
        PoolSelector::IndustryBasis(industries) => {
            let wanted: Vec<String> = industries.iter().map(|i| i.trim().to_lowercase()).collect();
            let eligible: Vec<&PoolCandidate> = universe
                .iter()
                .filter(|c| {
                    c.industry
                        .as_deref()
                        .is_some_and(|i| wanted.contains(&i.trim().to_lowercase()))
                })
                .collect();
            if eligible.len() < n_sel {
                log::warn!(
                    "industries {industries:?} hold {} stocks, fewer than n_sel {n_sel}; drawing uniformly",
                    eligible.len()
                );
                return Ok(finish(random(universe, n_sel, &mut rng), false, true));
            }
            rand::seq::index::sample(&mut rng, eligible.len(), n_sel)
                .into_iter()
                .map(|i| eligible[i])
                .collect()
        }
    };
    Ok(finish(picked, false, false))
}

fn finish(picked: Vec<&PoolCandidate>, whole_universe: bool, fell_back: bool) -> PoolDraw {
    let mut stocks: Vec<StockId> = picked.into_iter().map(|c| c.stock.clone()).collect();
    stocks.sort();
    PoolDraw {
        stocks,
        whole_universe,
        fell_back,
    }
}

fn random<'a>(universe: &'a [PoolCandidate], n: usize, rng: &mut ChaCha8Rng) -> Vec<&'a PoolCandidate> {
    rand::seq::index::sample(rng, universe.len(), n.min(universe.len()))
        .into_iter()
        .map(|i| &universe[i])
        .collect()
}

fn by_industry<'a>(it: impl Iterator<Item = &'a PoolCandidate>) -> BTreeMap<String, Vec<&'a PoolCandidate>> {
    let mut groups: BTreeMap<String, Vec<&PoolCandidate>> = BTreeMap::new();
    for c in it {
        groups
            .entry(c.industry.clone().unwrap_or_default())
            .or_default()
            .push(c);
    }
    groups
}

fn round_robin(groups: Vec<Vec<&PoolCandidate>>, n: usize) -> Vec<&PoolCandidate> {
    let mut out = Vec::with_capacity(n);
    let mut round = 0;
    while out.len() < n {
        let mut progressed = false;
        for g in &groups {
            if out.len() == n {
                break;
            }
            if let Some(c) = g.get(round) {
                out.push(*c);
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
        round += 1;
    }
    out
}

/// Quintile buckets by market cap, equal allocation per bucket, remainder to
/// the largest-cap buckets; shortfalls in small buckets spill to the others.
fn mv_equal<'a>(universe: &'a [PoolCandidate], n_sel: usize, rng: &mut ChaCha8Rng) -> Vec<&'a PoolCandidate> {
    let mut sorted: Vec<&PoolCandidate> = universe.iter().collect();
    sorted.sort_by(|a, b| {
        a.market_cap
            .partial_cmp(&b.market_cap)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.stock.cmp(&b.stock))
    });
    let n = sorted.len();
    let n_buckets = MV_BUCKETS.min(n);
    let buckets: Vec<&[&PoolCandidate]> = (0..n_buckets)
        .map(|b| &sorted[b * n / n_buckets..(b + 1) * n / n_buckets])
        .collect();

    let mut alloc = vec![n_sel / n_buckets; n_buckets];
    for b in (0..n_buckets).rev().take(n_sel % n_buckets) {
        alloc[b] += 1;
    }
    let mut spill = 0;
    for (a, bucket) in alloc.iter_mut().zip(&buckets) {
        if *a > bucket.len() {
            spill += *a - bucket.len();
            *a = bucket.len();
        }
    }
    for b in (0..n_buckets).rev() {
        let room = buckets[b].len() - alloc[b];
        let take = room.min(spill);
        alloc[b] += take;
        spill -= take;
    }

    let mut out = Vec::with_capacity(n_sel);
    for (bucket, &a) in buckets.iter().zip(&alloc) {
        for i in rand::seq::index::sample(rng, bucket.len(), a) {
            out.push(bucket[i]);
        }
    }
    out
}
