//! Consensus / disagreement aggregation of agent-type selections.
//!
//! For stock `s`, with type weights `d` and selection fractions `V[i][s]`:
//! `m = Σ d_i V[i][s]`, `σ = sqrt(Σ d_i (V[i][s] − m)²)` and
//! `signal = α·m − (1 − α)·σ`.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::agents::DecisionMatrix;
use crate::dataset::StockId;
use crate::error::{Error, Result};

/// Weights over agent types: nonnegative and summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TypeDistribution {
    weights: Vec<f64>,
}

impl TypeDistribution {
    /// Normalizes `weights`; rejects empty, negative, non-finite or all-zero input.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Contract("empty type distribution".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Contract(format!("invalid type weights {weights:?}")));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Contract("type weights sum to zero".into()));
        }
        Ok(Self {
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(n_type: usize) -> Self {
        assert!(n_type > 0, "uniform distribution over zero types");
        Self {
            weights: vec![1.0 / n_type as f64; n_type],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.weights[i]
    }
}

impl TryFrom<Vec<f64>> for TypeDistribution {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<TypeDistribution> for Vec<f64> {
    fn from(d: TypeDistribution) -> Self {
        d.weights
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockSignal {
    pub stock: StockId,
    pub m: f64,
    pub sigma: f64,
    pub signal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySignal {
    pub date: NaiveDate,
    /// Mixing weight used; unknown when read back from a signal file.
    pub alpha: Option<f64>,
    pub records: Vec<StockSignal>,
}

impl DailySignal {
    pub fn get(&self, stock: &str) -> Option<&StockSignal> {
        self.records.iter().find(|r| r.stock == stock)
    }
}

/// Consensus and disagreement of one column of `V`.
#[inline]
pub fn weighted_moments(column: impl Iterator<Item = f64> + Clone, d: &[f64]) -> (f64, f64) {
    let m: f64 = column.clone().zip(d).map(|(v, w)| w * v).sum();
    let var: f64 = column.zip(d).map(|(v, w)| w * (v - m) * (v - m)).sum();
    (m, var.max(0.0).sqrt())
}

/// Signal for each stock column of a row-major `n_type x n_stocks` value
/// block, written into `out`. Hot path of the optimizer objective.
pub fn signal_values(values: &[f64], n_stocks: usize, d: &[f64], alpha: f64, columns: &[usize], out: &mut Vec<f64>) {
    out.clear();
    let n_type = d.len();
    for &s in columns {
        let col = (0..n_type).map(|i| values[i * n_stocks + s]);
        let (m, sigma) = weighted_moments(col, d);
        out.push(alpha * m - (1.0 - alpha) * sigma);
    }
}

/// Aggregates a day's decisions. `stocks` names the matrix columns.
pub fn aggregate(v: &DecisionMatrix, d: &TypeDistribution, alpha: f64, stocks: &[StockId]) -> Result<DailySignal> {
    if v.n_type() != d.len() {
        return Err(Error::Contract(format!(
            "decision matrix has {} type rows, distribution has {} weights",
            v.n_type(),
            d.len()
        )));
    }
    if v.n_stocks() != stocks.len() {
        return Err(Error::Contract(format!(
            "decision matrix has {} columns for {} stocks",
            v.n_stocks(),
            stocks.len()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Contract(format!("alpha {alpha} outside [0, 1]")));
    }
    let records = stocks
        .iter()
        .enumerate()
        .map(|(s, stock)| {
            let col = (0..v.n_type()).map(|i| v.get(i, s));
            let (m, sigma) = weighted_moments(col, d.weights());
            StockSignal {
                stock: stock.clone(),
                m,
                sigma,
                signal: alpha * m - (1.0 - alpha) * sigma,
            }
        })
        .collect();
    Ok(DailySignal {
        date: v.date(),
        alpha: Some(alpha),
        records,
    })
}

/// Stocks by descending signal, ties by ascending id.
pub fn rank_stocks(signal: &DailySignal) -> Vec<StockId> {
    let mut recs: Vec<&StockSignal> = signal.records.iter().collect();
    recs.sort_by(|a, b| b.signal.total_cmp(&a.signal).then_with(|| a.stock.cmp(&b.stock)));
    recs.into_iter().map(|r| r.stock.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub holdings: Vec<(StockId, f64)>,
}

impl Portfolio {
    pub fn stocks(&self) -> impl Iterator<Item = &str> {
        self.holdings.iter().map(|(s, _)| s.as_str())
    }
}

/// Equal-weight portfolio of the first `k` ranked stocks (`k` clamped to
/// `1..=ranked.len()`).
pub fn top_k_portfolio(ranked: &[StockId], k: usize) -> Portfolio {
    if ranked.is_empty() {
        return Portfolio { holdings: Vec::new() };
    }
    if k > ranked.len() {
        log::warn!("top-k of {k} exceeds {} ranked stocks; clamping", ranked.len());
    }
    let k = k.clamp(1, ranked.len());
    let w = 1.0 / k as f64;
    Portfolio {
        holdings: ranked[..k].iter().map(|s| (s.clone(), w)).collect(),
    }
}

/// Default daily portfolio size: a fifth of the ranked universe, at least one.
pub fn default_top_k(n: usize) -> usize {
    ((0.2 * n as f64).round() as usize).max(1)
}

pub fn write_signals_csv(path: &Path, signals: &[DailySignal]) -> Result<()> {
    let err = |e: csv::Error| Error::Store(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["date", "stock", "m", "sigma", "signal"]).map_err(err)?;
    for day in signals {
        let date = day.date.to_string();
        for r in &day.records {
            w.write_record([
                date.as_str(),
                r.stock.as_str(),
                &r.m.to_string(),
                &r.sigma.to_string(),
                &r.signal.to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Deserialize)]
struct SignalRow {
    date: NaiveDate,
    stock: StockId,
    m: f64,
    sigma: f64,
    signal: f64,
}

/// Reads a signal file back, grouping rows by date in file order.
pub fn read_signals_csv(path: &Path) -> Result<Vec<DailySignal>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.display().to_string()));
    }
    let file = path.display().to_string();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse(&file, e.to_string()))?;
    let mut out: Vec<DailySignal> = Vec::new();
    for row in r.deserialize::<SignalRow>() {
        let row = row.map_err(|e| Error::parse(&file, e.to_string()))?;
        let rec = StockSignal {
            stock: row.stock,
            m: row.m,
            sigma: row.sigma,
            signal: row.signal,
        };
        match out.last_mut() {
            Some(day) if day.date == row.date => day.records.push(rec),
            _ => out.push(DailySignal {
                date: row.date,
                alpha: None,
                records: vec![rec],
            }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2023, 3, 1).unwrap()
    }

    fn ids(n: usize) -> Vec<StockId> {
        (0..n).map(|i| format!("S{i}")).collect()
    }

    #[test]
    fn unanimous_column() {
        let v = DecisionMatrix::from_rows(day(), &[vec![1.0], vec![1.0]]).unwrap();
        let s = aggregate(&v, &TypeDistribution::uniform(2), 0.5, &ids(1)).unwrap();
        let r = &s.records[0];
        assert_eq!((r.m, r.sigma, r.signal), (1.0, 0.0, 0.5));
    }

    #[test]
    fn split_column() {
        let v = DecisionMatrix::from_rows(day(), &[vec![1.0], vec![0.0]]).unwrap();
        let d = TypeDistribution::new(vec![0.3, 0.7]).unwrap();
        let r = aggregate(&v, &d, 0.5, &ids(1)).unwrap().records[0].clone();
        assert!((r.m - 0.3).abs() < 1e-15);
        assert!((r.sigma - 0.21f64.sqrt()).abs() < 1e-15);
        assert!((r.signal - (0.15 - 0.5 * 0.21f64.sqrt())).abs() < 1e-15);
        assert!((r.signal + 0.07913).abs() < 1e-5);
        let r0 = aggregate(&v, &d, 0.0, &ids(1)).unwrap().records[0].clone();
        assert_eq!(r0.signal, -r0.sigma);
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let v = DecisionMatrix::from_rows(day(), &[vec![1.0, 0.0]]).unwrap();
        assert!(aggregate(&v, &TypeDistribution::uniform(2), 0.5, &ids(2)).is_err());
        assert!(aggregate(&v, &TypeDistribution::uniform(1), 0.5, &ids(3)).is_err());
    }

    #[test]
    fn ranking_and_ties() {
        let mk = |pairs: &[(&str, f64)]| DailySignal {
            date: day(),
            alpha: Some(0.5),
            records: pairs
                .iter()
                .map(|(s, v)| StockSignal { stock: s.to_string(), m: 0.0, sigma: 0.0, signal: *v })
                .collect(),
        };
        assert_eq!(rank_stocks(&mk(&[("A", 0.2), ("B", 0.5)])), vec!["B", "A"]);
        assert_eq!(rank_stocks(&mk(&[("B", 0.3), ("A", 0.3)])), vec!["A", "B"]);
    }

    #[test]
    fn top_k_weights() {
        let ranked = ids(10);
        let p = top_k_portfolio(&ranked, 1);
        assert_eq!(p.holdings, vec![("S0".to_string(), 1.0)]);
        let p = top_k_portfolio(&ranked, 5);
        assert_eq!(p.holdings.len(), 5);
        assert!(p.holdings.iter().all(|(_, w)| *w == 0.2));
        assert_eq!(top_k_portfolio(&ranked, 50).holdings.len(), 10);
        assert_eq!(top_k_portfolio(&ids(300), default_top_k(300)).holdings.len(), 60);
    }

    #[test]
    fn distribution_normalizes_and_validates() {
        let d = TypeDistribution::new(vec![2.0, 6.0]).unwrap();
        assert_eq!(d.weights(), &[0.25, 0.75]);
        assert!(TypeDistribution::new(vec![-1.0, 2.0]).is_err());
        assert!(TypeDistribution::new(vec![0.0, 0.0]).is_err());
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(json, "[0.25,0.75]");
        assert_eq!(serde_json::from_str::<TypeDistribution>(&json).unwrap(), d);
    }

    #[test]
    fn signal_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("signals.csv");
        let v = DecisionMatrix::from_rows(day(), &[vec![0.1, 0.7, 1.0 / 3.0], vec![0.2, 0.0, 0.9]]).unwrap();
        let s = aggregate(&v, &TypeDistribution::new(vec![0.37, 0.63]).unwrap(), 0.2, &ids(3)).unwrap();
        write_signals_csv(&path, std::slice::from_ref(&s)).unwrap();
        let back = read_signals_csv(&path).unwrap();
        assert_eq!(back[0].records, s.records);
    }
}
