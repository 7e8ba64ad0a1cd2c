//! Daily decision execution and the per-day decision cache.
//!
//! The cache (`decisions/<date>.jsonl` in a run store) holds one record per
//! agent instance and is the only input the backward optimizer reads.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::population::described;
use super::{AgentPopulation, DailyStrategy, DecisionProvider, SelectionRequest};
use crate::dataset::{MarketDataset, StockId};
use crate::error::{Error, Result};

/// Stocks each agent picks per day: a fifth of its pool, at least one.
pub fn selection_count(n_sel: usize) -> usize {
    ((0.2 * n_sel as f64).round() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub date: NaiveDate,
    pub type_index: usize,
    pub instance_index: usize,
    pub selected: Vec<StockId>,
    pub provider_id: String,
}

/// `V[i][s]`: fraction of type-`i` instances that selected stock `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionMatrix {
    date: NaiveDate,
    n_type: usize,
    n_stocks: usize,
    values: Vec<f64>,
}

impl DecisionMatrix {
    /// Builds `V` from raw selections. Records naming unknown stocks, or type
    /// indices out of range, are contract violations.
    pub fn from_records(
        date: NaiveDate,
        n_type: usize,
        n_inv: usize,
        universe: &[StockId],
        records: &[DecisionRecord],
    ) -> Result<Self> {
        let index: std::collections::HashMap<&str, usize> =
            universe.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let n_stocks = universe.len();
        let mut counts = vec![0usize; n_type * n_stocks];
        for r in records {
            if r.type_index >= n_type || r.instance_index >= n_inv {
                return Err(Error::Contract(format!(
                    "decision record ({}, {}) outside a {n_type}x{n_inv} population",
                    r.type_index, r.instance_index
                )));
            }
            let mut seen = HashSet::new();
            for code in &r.selected {
                let s = *index
                    .get(code.as_str())
                    .ok_or_else(|| Error::Contract(format!("decision names unknown stock {code:?}")))?;
                if seen.insert(s) {
                    counts[r.type_index * n_stocks + s] += 1;
                }
            }
        }
        let values = counts.into_iter().map(|c| c as f64 / n_inv as f64).collect();
        Ok(Self {
            date,
            n_type,
            n_stocks,
            values,
        })
    }

    /// Direct construction from per-type rows of values in `[0, 1]`.
    pub fn from_rows(date: NaiveDate, rows: &[Vec<f64>]) -> Result<Self> {
        let n_type = rows.len();
        let n_stocks = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_stocks) {
            return Err(Error::Contract("ragged decision matrix".into()));
        }
        if rows.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Contract("decision fraction outside [0, 1]".into()));
        }
        Ok(Self {
            date,
            n_type,
            n_stocks,
            values: rows.concat(),
        })
    }

    pub fn date(&self) -> NaiveDate {
        self.date
    }

    pub fn n_type(&self) -> usize {
        self.n_type
    }

    pub fn n_stocks(&self) -> usize {
        self.n_stocks
    }

    pub fn get(&self, type_index: usize, stock: usize) -> f64 {
        self.values[type_index * self.n_stocks + stock]
    }

    pub fn row(&self, type_index: usize) -> &[f64] {
        &self.values[type_index * self.n_stocks..(type_index + 1) * self.n_stocks]
    }

    /// Row-major `n_type x n_stocks` values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionReport {
    /// Instances that ended the day selecting nothing.
    pub abstentions: usize,
    /// Instances whose first answer was invalid and were asked again.
    pub retried: usize,
    /// Instances whose answer was still invalid and was repaired by the caller.
    pub repaired: usize,
}

#[derive(Debug, Clone)]
pub struct DayDecisions {
    pub matrix: DecisionMatrix,
    pub records: Vec<DecisionRecord>,
    pub report: SelectionReport,
}

/// Describes why `codes` is not an acceptable answer, or `None` if it is.
pub fn selection_problem(codes: &[String], legal: &HashSet<&str>, count: usize) -> Option<String> {
    let illegal: Vec<&str> = codes
        .iter()
        .map(String::as_str)
        .filter(|c| !legal.contains(c))
        .collect();
    if !illegal.is_empty() {
        return Some(format!("codes not in the input data: {}", illegal.join(", ")));
    }
    let unique: HashSet<&str> = codes.iter().map(String::as_str).collect();
    if unique.len() != codes.len() {
        return Some("duplicate stock codes".into());
    }
    if codes.len() != count {
        return Some(format!("{} stock codes given, {count} requested", codes.len()));
    }
    None
}

pub(crate) fn repair_hint(problem: &str, count: usize) -> String {
    format!(
        "Your previous answer was invalid ({problem}). Please make sure:\n\
         1. You output legal stock code. The stock code is legal if and only if it is in the input data \"Stock\" list.\n\
         2. The number of stock codes is correct, actually equal to {count}."
    )
}

struct Outcome {
    selected: Vec<StockId>,
    retried: bool,
    repaired: bool,
}

fn decide(provider: &dyn DecisionProvider, req: &SelectionRequest<'_>, legal: &HashSet<&str>) -> Result<Outcome> {
    let first = provider.select_stocks(req)?;
    let Some(problem) = selection_problem(&first, legal, req.num_stocks) else {
        return Ok(Outcome { selected: first, retried: false, repaired: false });
    };
    let second = if provider.validates_selections() {
        first
    } else {
        let hint = repair_hint(&problem, req.num_stocks);
        let retry_req = SelectionRequest {
            repair_hint: Some(&hint),
            ..req.clone()
        };
        let second = provider.select_stocks(&retry_req)?;
        if selection_problem(&second, legal, req.num_stocks).is_none() {
            return Ok(Outcome { selected: second, retried: true, repaired: false });
        }
        second
    };
    // Keep legal, distinct codes in provider order, truncated to the count.
    let mut seen = HashSet::new();
    let selected: Vec<StockId> = second
        .into_iter()
        .filter(|c| legal.contains(c.as_str()) && seen.insert(c.clone()))
        .take(req.num_stocks)
        .collect();
    Ok(Outcome { selected, retried: true, repaired: true })
}

/// Runs every agent instance's stock selection for `day` and assembles `V`.
/// Instances run concurrently; results do not depend on scheduling.
pub fn execute_decisions(
    population: &AgentPopulation,
    ds: &MarketDataset,
    day: usize,
    strategies: &[DailyStrategy],
    provider: &dyn DecisionProvider,
) -> Result<DayDecisions> {
    let n_type = population.n_type();
    if strategies.len() != n_type {
        return Err(Error::Contract(format!(
            "{} strategies for {n_type} agent types",
            strategies.len()
        )));
    }
    let date = ds.calendar().date(day);
    let schema = ds.schema();
    let described: Vec<Vec<(String, String)>> = population
        .types
        .iter()
        .map(|t| described(schema, &t.feature_subset))
        .collect();
    let count = selection_count(population.n_sel);

    let outcomes: Vec<(DecisionRecord, bool, bool)> = population
        .instances
        .par_iter()
        .map(|inst| {
            let ty = &population.types[inst.type_index];
            let rows: Vec<_> = inst
                .pool
                .iter()
                .filter_map(|code| ds.stock_index(code))
                .filter(|&s| ds.bar(day, s).is_some())
                .map(|s| ds.visible_features(&ty.feature_subset, s, day))
                .collect();
            let mut record = DecisionRecord {
                date,
                type_index: inst.type_index,
                instance_index: inst.instance_index,
                selected: Vec::new(),
                provider_id: provider.id().to_string(),
            };
            if rows.is_empty() {
                return Ok((record, false, false));
            }
            let legal: HashSet<&str> = rows.iter().map(|r| r.stock.as_str()).collect();
            let req = SelectionRequest {
                type_index: inst.type_index,
                instance_index: inst.instance_index,
                date,
                strategy: &strategies[inst.type_index].text,
                style: &ty.style,
                features: &described[inst.type_index],
                rows: &rows,
                num_stocks: count.min(rows.len()),
                repair_hint: None,
            };
            let out = decide(provider, &req, &legal)?;
            record.selected = out.selected;
            Ok((record, out.retried, out.repaired))
        })
        .collect::<Result<_>>()?;

    let mut report = SelectionReport::default();
    let mut records = Vec::with_capacity(outcomes.len());
    for (rec, retried, repaired) in outcomes {
        report.retried += usize::from(retried);
        report.repaired += usize::from(repaired);
        report.abstentions += usize::from(rec.selected.is_empty());
        records.push(rec);
    }
    if report.abstentions > 0 {
        log::warn!("{date}: {} agent instances abstained", report.abstentions);
    }
    let matrix = DecisionMatrix::from_records(date, n_type, population.n_inv, ds.stocks(), &records)?;
    Ok(DayDecisions {
        matrix,
        records,
        report,
    })
}

pub fn write_decision_cache(path: &Path, records: &[DecisionRecord]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension("jsonl.tmp");
    let f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut w = BufWriter::new(f);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(&tmp, e))?;
    }
    w.flush().map_err(|e| Error::io(&tmp, e))?;
    drop(w);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_decision_cache(path: &Path) -> Result<Vec<DecisionRecord>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
