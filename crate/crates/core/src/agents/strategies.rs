use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::population::described;
use super::{AgentPopulation, DecisionProvider, StrategyRequest};
use crate::dataset::TradingCalendar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategySchedule {
    /// Refresh on the first trading day of each ISO week.
    #[default]
    Weekly,
    Daily,
}

impl StrategySchedule {
    pub fn is_due(self, calendar: &TradingCalendar, day: usize) -> bool {
        match self {
            StrategySchedule::Weekly => calendar.is_week_start(day),
            StrategySchedule::Daily => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyStrategy {
    pub type_index: usize,
    /// Day the text was generated; reused on later days until the next refresh.
    pub date: NaiveDate,
    pub text: String,
}

/// Most recent strategy of each agent type.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StrategyBook {
    entries: Vec<Option<DailyStrategy>>,
    #[serde(skip)]
    last_calls: usize,
}

impl StrategyBook {
    pub fn new(n_type: usize) -> Self {
        Self {
            entries: vec![None; n_type],
            last_calls: 0,
        }
    }

    pub fn from_strategies(n_type: usize, strategies: Vec<DailyStrategy>) -> Result<Self> {
        let mut book = Self::new(n_type);
        for s in strategies {
            let slot = book
                .entries
                .get_mut(s.type_index)
                .ok_or_else(|| Error::Store(format!("strategy for unknown agent type {}", s.type_index)))?;
            *slot = Some(s);
        }
        Ok(book)
    }

    pub fn get(&self, type_index: usize) -> Option<&DailyStrategy> {
        self.entries.get(type_index).and_then(Option::as_ref)
    }

    /// All strategies, if every type has one.
    pub fn current(&self) -> Option<Vec<DailyStrategy>> {
        self.entries.iter().cloned().collect()
    }

    /// Provider calls made by the last [`generate_strategies`] invocation.
    pub fn last_calls(&self) -> usize {
        self.last_calls
    }
}

/// Returns each type's strategy for `day`, calling the provider only for
/// types that are due a refresh (or have never had a strategy). A failed
/// refresh reuses the previous text; a type with nothing to reuse fails the day.
pub fn generate_strategies(
    population: &AgentPopulation,
    calendar: &TradingCalendar,
    schema: &crate::dataset::DatasetSchema,
    day: usize,
    macro_narrative: &str,
    provider: &dyn DecisionProvider,
    schedule: StrategySchedule,
    book: &mut StrategyBook,
) -> Result<Vec<DailyStrategy>> {
    let n_type = population.n_type();
    if book.entries.len() != n_type {
        book.entries.resize(n_type, None);
    }
    let date = calendar.date(day);
    let due = schedule.is_due(calendar, day);
    let targets: Vec<usize> = (0..n_type).filter(|&i| due || book.entries[i].is_none()).collect();

    let fresh: Vec<(usize, std::result::Result<String, super::ProviderError>)> = targets
        .par_iter()
        .map(|&i| {
            let ty = &population.types[i];
            let features = described(schema, &ty.feature_subset);
            let res = provider.generate_strategy(&StrategyRequest {
                type_index: i,
                date,
                style: &ty.style,
                features: &features,
                macro_narrative,
            });
            (i, res)
        })
        .collect();
    book.last_calls = fresh.len();

    for (i, res) in fresh {
        match res {
            Ok(text) if !text.trim().is_empty() => {
                book.entries[i] = Some(DailyStrategy { type_index: i, date, text });
            }
            outcome => {
                let why = match outcome {
                    Err(e) => e.to_string(),
                    Ok(_) => "empty strategy text".to_string(),
                };
                if book.entries[i].is_some() {
                    log::warn!("{date}: strategy refresh for type {i} failed ({why}); reusing previous");
                } else {
                    return Err(Error::Provider(super::ProviderError::Unavailable(format!(
                        "no strategy for type {i} on {date}: {why}"
                    ))));
                }
            }
        }
    }
    Ok(book.current().expect("every type has a strategy"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{build_population, CountingProvider, DeterministicProvider, PopulationSpec};
    use crate::synth::SyntheticMarket;

    fn setup() -> (crate::dataset::MarketDataset, AgentPopulation) {
        let ds = SyntheticMarket { n_stocks: 20, n_days: 10, ..SyntheticMarket::default() }.generate();
        let spec = PopulationSpec { n_type: 3, n_inv: 2, n_sel: 5, seed: 4, feature_subsets: None };
        let pop = build_population(&ds, &spec, &DeterministicProvider::new(2), ds.calendar().date(0), "m").unwrap();
        (ds, pop)
    }

    #[test]
    fn weekly_schedule_calls_once_per_week() {
        let (ds, pop) = setup();
        let cal = ds.calendar();
        let week_start = (0..cal.len()).find(|&d| cal.is_week_start(d) && d > 0).unwrap();
        let p = CountingProvider::new(DeterministicProvider::new(2));
        let mut book = StrategyBook::new(3);
        generate_strategies(&pop, cal, ds.schema(), week_start, "m", &p, StrategySchedule::Weekly, &mut book).unwrap();
        assert_eq!(p.counts().strategies, 3);
        if week_start + 1 < cal.len() && !cal.is_week_start(week_start + 1) {
            let s = generate_strategies(&pop, cal, ds.schema(), week_start + 1, "m", &p, StrategySchedule::Weekly, &mut book)
                .unwrap();
            assert_eq!(p.counts().strategies, 3);
            assert_eq!(book.last_calls(), 0);
            assert!(s.iter().all(|x| x.date == cal.date(week_start)));
        }
    }

    #[test]
    fn daily_schedule_calls_every_day() {
        let (ds, pop) = setup();
        let p = CountingProvider::new(DeterministicProvider::new(2));
        let mut book = StrategyBook::new(3);
        for d in 0..4 {
            generate_strategies(&pop, ds.calendar(), ds.schema(), d, "m", &p, StrategySchedule::Daily, &mut book).unwrap();
        }
        assert_eq!(p.counts().strategies, 12);
    }

    #[test]
    fn strategies_are_reproducible() {
        let (ds, pop) = setup();
        let p = DeterministicProvider::new(2);
        let mut a = StrategyBook::new(3);
        let mut b = StrategyBook::new(3);
        let sa = generate_strategies(&pop, ds.calendar(), ds.schema(), 0, "m", &p, StrategySchedule::Weekly, &mut a).unwrap();
        let sb = generate_strategies(&pop, ds.calendar(), ds.schema(), 0, "m", &p, StrategySchedule::Weekly, &mut b).unwrap();
        assert_eq!(sa, sb);
    }
}
