//! Multi-modal market dataset: trading calendar, per-stock daily bars and
//! features, text items, macro indicators and the benchmark index.
//!
//! A [`MarketDataset`] is immutable once loaded. Tables are stored densely as
//! `[day][stock]` vectors indexed by calendar position and stock position in
//! the sorted universe.

mod io;
mod labels;
mod schema;

use std::collections::{BTreeMap, HashMap};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_dataset, save_dataset, LoadReport};
pub use labels::{compute_labels, LabelMatrix, LABEL_AVAILABILITY_LAG};
pub use schema::DatasetSchema;

pub type StockId = String;

/// Literal used for missing cells when rendering features as text.
pub const MISSING_TOKEN: &str = "NA";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TradingCalendar {
    days: Vec<NaiveDate>,
}

impl TradingCalendar {
    pub fn new(days: Vec<NaiveDate>) -> Result<Self> {
        for w in days.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Calendar(format!(
                    "dates not strictly increasing: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self { days })
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn date(&self, index: usize) -> NaiveDate {
        self.days[index]
    }

    pub fn days(&self) -> &[NaiveDate] {
        &self.days
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.days.binary_search(&date).ok()
    }

    /// True on the first trading day of each ISO week present in the calendar.
    pub fn is_week_start(&self, index: usize) -> bool {
        if index == 0 {
            return true;
        }
        let (a, b) = (self.days[index - 1].iso_week(), self.days[index].iso_week());
        (a.year(), a.week()) != (b.year(), b.week())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceBar {
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: Option<f64>,
    pub value: Option<f64>,
    /// Mean trade price over the first fifteen minutes of the session.
    pub ref_price: Option<f64>,
    pub limit_up: bool,
    pub limit_down: bool,
}

impl PriceBar {
    /// A flat bar where every price equals `price`.
    pub fn flat(price: f64) -> Self {
        Self {
            open: price,
            high: price,
            low: price,
            close: price,
            volume: Some(0.0),
            value: Some(0.0),
            ref_price: Some(price),
            limit_up: false,
            limit_down: false,
        }
    }

    /// Execution price: the fifteen-minute reference price, or the open when
    /// it is absent.
    pub fn execution_price(&self) -> f64 {
        self.ref_price.unwrap_or(self.open)
    }

    pub fn is_limit_flagged(&self) -> bool {
        self.limit_up || self.limit_down
    }

    fn is_consistent(&self) -> bool {
        let lo = self.open.min(self.close);
        let hi = self.open.max(self.close);
        self.low <= lo && hi <= self.high
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextKind {
    News,
    Report,
}

impl TextKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TextKind::News => "news",
            TextKind::Report => "report",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "news" => Some(TextKind::News),
            "report" => Some(TextKind::Report),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextItem {
    pub kind: TextKind,
    pub title: String,
    pub summary: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StockMeta {
    pub industry: Option<String>,
    pub market_cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroDay {
    pub date: NaiveDate,
    /// Indicator values after forward fill, in schema order.
    pub indicators: Vec<(String, f64)>,
    pub narrative: String,
}

/// Columns and text kinds visible to one agent type.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSubset {
    pub columns: Vec<String>,
    #[serde(default)]
    pub text_kinds: Vec<TextKind>,
}

impl FeatureSubset {
    pub fn all(schema: &DatasetSchema) -> Self {
        Self {
            columns: schema.features.clone(),
            text_kinds: vec![TextKind::News, TextKind::Report],
        }
    }

    /// Rejects columns the schema does not declare and reorders the rest
    /// into schema order.
    pub fn validated(mut self, schema: &DatasetSchema) -> Result<Self> {
        for c in &self.columns {
            if schema.feature_position(c).is_none() {
                return Err(Error::Config(format!("unknown feature column {c:?}")));
            }
        }
        self.columns
            .sort_by_key(|c| schema.feature_position(c).unwrap_or(usize::MAX));
        self.columns.dedup();
        self.text_kinds.sort();
        self.text_kinds.dedup();
        Ok(self)
    }
}

/// Projection of one (stock, day) row onto a [`FeatureSubset`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureView {
    pub stock: StockId,
    pub date: NaiveDate,
    pub values: Vec<(String, Option<f64>)>,
    pub texts: Vec<TextItem>,
}

#[derive(Debug, Clone)]
pub struct MarketDataset {
    pub(crate) schema: DatasetSchema,
    pub(crate) calendar: TradingCalendar,
    pub(crate) stocks: Vec<StockId>,
    pub(crate) stock_index: HashMap<StockId, usize>,
    pub(crate) meta: Vec<StockMeta>,
    pub(crate) bars: Vec<Vec<Option<PriceBar>>>,
    pub(crate) features: Vec<Vec<Option<Vec<Option<f64>>>>>,
    pub(crate) texts: Vec<Vec<Vec<TextItem>>>,
    /// Raw (un-filled) macro observations per day.
    pub(crate) macro_raw: Vec<BTreeMap<String, f64>>,
    pub(crate) macro_days: Vec<MacroDay>,
    pub(crate) index_close: Vec<Option<f64>>,
    pub(crate) report: LoadReport,
}

impl MarketDataset {
    /// Builder entry point for in-memory datasets (synthetic markets, tests).
    pub fn builder(schema: DatasetSchema, days: Vec<NaiveDate>, stocks: Vec<StockId>) -> Result<DatasetBuilder> {
        DatasetBuilder::new(schema, days, stocks)
    }

    pub fn schema(&self) -> &DatasetSchema {
        &self.schema
    }

    pub fn calendar(&self) -> &TradingCalendar {
        &self.calendar
    }

    pub fn stocks(&self) -> &[StockId] {
        &self.stocks
    }

    pub fn stock_index(&self, stock: &str) -> Option<usize> {
        self.stock_index.get(stock).copied()
    }

    pub fn meta(&self, stock: usize) -> &StockMeta {
        &self.meta[stock]
    }

    pub fn bar(&self, day: usize, stock: usize) -> Option<&PriceBar> {
        self.bars[day][stock].as_ref()
    }

    pub fn feature_row(&self, day: usize, stock: usize) -> Option<&[Option<f64>]> {
        self.features[day][stock].as_deref()
    }

    pub fn texts(&self, day: usize, stock: usize) -> &[TextItem] {
        &self.texts[day][stock]
    }

    pub fn macro_day(&self, day: usize) -> &MacroDay {
        &self.macro_days[day]
    }

    pub fn index_close(&self, day: usize) -> Option<f64> {
        self.index_close[day]
    }

    pub fn load_report(&self) -> &LoadReport {
        &self.report
    }

    /// Stocks with a price bar on `day`, in universe order.
    pub fn day_universe(&self, day: usize) -> Vec<usize> {
        (0..self.stocks.len())
            .filter(|&s| self.bars[day][s].is_some())
            .collect()
    }

    /// Returns only the subset's columns and text kinds for one row, in
    /// schema order. Missing rows yield all-missing values.
    pub fn visible_features(&self, subset: &FeatureSubset, stock: usize, day: usize) -> FeatureView {
        let row = self.feature_row(day, stock);
        let values = subset
            .columns
            .iter()
            .map(|name| {
                let v = self
                    .schema
                    .feature_position(name)
                    .and_then(|p| row.and_then(|r| r[p]));
                (name.clone(), v)
            })
            .collect();
        let texts = self.texts[day][stock]
            .iter()
            .filter(|t| subset.text_kinds.contains(&t.kind))
            .cloned()
            .collect();
        FeatureView {
            stock: self.stocks[stock].clone(),
            date: self.calendar.date(day),
            values,
            texts,
        }
    }
}

/// Incremental constructor for in-memory datasets; applies the same
/// validation and macro forward-fill as the file loader.
pub struct DatasetBuilder {
    ds: MarketDataset,
}

impl DatasetBuilder {
    fn new(schema: DatasetSchema, days: Vec<NaiveDate>, mut stocks: Vec<StockId>) -> Result<Self> {
        let calendar = TradingCalendar::new(days)?;
        stocks.sort();
        stocks.dedup();
        let n_days = calendar.len();
        let n_stocks = stocks.len();
        let stock_index = stocks
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Ok(Self {
            ds: MarketDataset {
                schema,
                calendar,
                meta: vec![StockMeta::default(); n_stocks],
                stock_index,
                stocks,
                bars: vec![vec![None; n_stocks]; n_days],
                features: vec![vec![None; n_stocks]; n_days],
                texts: vec![vec![Vec::new(); n_stocks]; n_days],
                macro_raw: vec![BTreeMap::new(); n_days],
                macro_days: Vec::new(),
                index_close: vec![None; n_days],
                report: LoadReport::default(),
            },
        })
    }

    fn stock(&self, stock: &str) -> Result<usize> {
        self.ds
            .stock_index(stock)
            .ok_or_else(|| Error::Contract(format!("unknown stock {stock:?}")))
    }

    pub fn bar(&mut self, day: usize, stock: &str, bar: PriceBar) -> Result<&mut Self> {
        let s = self.stock(stock)?;
        check_bar(&bar).map_err(|m| Error::Contract(format!("{stock} day {day}: {m}")))?;
        self.ds.bars[day][s] = Some(bar);
        Ok(self)
    }

    pub fn features(&mut self, day: usize, stock: &str, row: Vec<Option<f64>>) -> Result<&mut Self> {
        let s = self.stock(stock)?;
        if row.len() != self.ds.schema.features.len() {
            return Err(Error::Contract(format!(
                "feature row has {} values, schema declares {}",
                row.len(),
                self.ds.schema.features.len()
            )));
        }
        self.ds.features[day][s] = Some(row);
        Ok(self)
    }

    pub fn text(&mut self, day: usize, stock: &str, item: TextItem) -> Result<&mut Self> {
        let s = self.stock(stock)?;
        self.ds.texts[day][s].push(item);
        Ok(self)
    }

    pub fn meta(&mut self, stock: &str, meta: StockMeta) -> Result<&mut Self> {
        let s = self.stock(stock)?;
        self.ds.meta[s] = meta;
        Ok(self)
    }

    pub fn macro_value(&mut self, day: usize, indicator: &str, value: f64) -> &mut Self {
        self.ds.macro_raw[day].insert(indicator.to_string(), value);
        self
    }

    pub fn index_close(&mut self, day: usize, close: f64) -> &mut Self {
        self.ds.index_close[day] = Some(close);
        self
    }

    pub fn build(mut self) -> MarketDataset {
        self.ds.macro_days = fill_macro(&self.ds.schema, &self.ds.calendar, &self.ds.macro_raw);
        self.ds
    }
}

pub(crate) fn check_bar(bar: &PriceBar) -> std::result::Result<(), String> {
    if bar.limit_up && bar.limit_down {
        return Err("limit_up and limit_down both set".into());
    }
    let prices = [bar.open, bar.high, bar.low, bar.close];
    if prices.iter().any(|p| !(p.is_finite() && *p > 0.0)) || bar.ref_price.is_some_and(|p| !(p > 0.0)) {
        return Err("non-positive price".into());
    }
    if bar.volume.is_some_and(|v| v < 0.0) || bar.value.is_some_and(|v| v < 0.0) {
        return Err("negative volume or value".into());
    }
    Ok(())
}

pub(crate) fn bar_is_consistent(bar: &PriceBar) -> bool {
    bar.is_consistent()
}

/// Forward-fills macro indicators (no staleness limit) and renders the
/// per-day narrative.
pub(crate) fn fill_macro(
    schema: &DatasetSchema,
    calendar: &TradingCalendar,
    raw: &[BTreeMap<String, f64>],
) -> Vec<MacroDay> {
    let names: Vec<String> = if schema.macro_indicators.is_empty() {
        let mut all: Vec<String> = raw.iter().flat_map(|m| m.keys().cloned()).collect();
        all.sort();
        all.dedup();
        all
    } else {
        schema.macro_indicators.clone()
    };
    let mut last: HashMap<&str, f64> = HashMap::new();
    raw.iter()
        .enumerate()
        .map(|(day, obs)| {
            for (k, v) in obs {
                last.insert(k.as_str(), *v);
            }
            let indicators: Vec<(String, f64)> = names
                .iter()
                .filter_map(|n| last.get(n.as_str()).map(|v| (n.clone(), *v)))
                .collect();
            let narrative = indicators
                .iter()
                .map(|(name, value)| match schema.macro_templates.get(name) {
                    Some(t) => t.replace("{value}", &value.to_string()),
                    None => format!("The latest {name} is {value}."),
                })
                .collect::<Vec<_>>()
                .join(" ");
            MacroDay {
                date: calendar.date(day),
                indicators,
                narrative,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn mixed_fixture() -> MarketDataset {
        let mut schema = DatasetSchema::new(vec!["E/P".into(), "B/P".into(), "ROE".into()]);
        schema.macro_indicators = vec!["cpi".into(), "lpr".into()];
        let mut b = MarketDataset::builder(schema, vec![d("2023-01-03"), d("2023-01-04")], vec!["A".into(), "B".into()]).unwrap();
        b.bar(0, "A", PriceBar::flat(10.0)).unwrap();
        b.features(0, "A", vec![Some(0.1), Some(0.2), None]).unwrap();
        for title in ["t1", "t2"] {
            b.text(0, "A", TextItem { kind: TextKind::News, title: title.into(), summary: "s".into() })
                .unwrap();
        }
        b.text(0, "A", TextItem { kind: TextKind::Report, title: "r".into(), summary: "s".into() })
            .unwrap();
        b.macro_value(0, "cpi", -0.5);
        b.macro_value(1, "lpr", 3.45);
        b.build()
    }

    #[test]
    fn calendar_rejects_duplicates_and_disorder() {
        assert!(TradingCalendar::new(vec![d("2023-01-03"), d("2023-01-03")]).is_err());
        assert!(TradingCalendar::new(vec![d("2023-01-04"), d("2023-01-03")]).is_err());
    }

    #[test]
    fn week_starts_follow_iso_weeks() {
        // Tue, Wed, Fri, then Mon of the next week.
        let cal = TradingCalendar::new(vec![d("2023-01-03"), d("2023-01-04"), d("2023-01-06"), d("2023-01-09")]).unwrap();
        let starts: Vec<bool> = (0..4).map(|i| cal.is_week_start(i)).collect();
        assert_eq!(starts, vec![true, false, false, true]);
    }

    #[test]
    fn all_columns_is_identity() {
        let ds = mixed_fixture();
        let view = ds.visible_features(&FeatureSubset::all(ds.schema()), 0, 0);
        let raw = ds.feature_row(0, 0).unwrap();
        let values: Vec<Option<f64>> = view.values.iter().map(|(_, v)| *v).collect();
        assert_eq!(values, raw);
        assert_eq!(view.texts.len(), 3);
    }

    #[test]
    fn projection_keeps_schema_order() {
        let ds = mixed_fixture();
        let subset = FeatureSubset { columns: vec!["B/P".into(), "E/P".into()], text_kinds: vec![] }
            .validated(ds.schema())
            .unwrap();
        let view = ds.visible_features(&subset, 0, 0);
        assert_eq!(view.values, vec![("E/P".to_string(), Some(0.1)), ("B/P".to_string(), Some(0.2))]);
        assert!(view.texts.is_empty());
    }

    #[test]
    fn news_only_subset() {
        let ds = mixed_fixture();
        let subset = FeatureSubset { columns: vec![], text_kinds: vec![TextKind::News] };
        let view = ds.visible_features(&subset, 0, 0);
        assert_eq!(view.texts.len(), 2);
        assert!(view.values.is_empty());
    }

    #[test]
    fn unknown_column_is_config_error() {
        let ds = mixed_fixture();
        let err = FeatureSubset { columns: vec!["P/E".into()], text_kinds: vec![] }
            .validated(ds.schema())
            .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn macro_forward_fills() {
        let ds = mixed_fixture();
        let day1 = ds.macro_day(1);
        assert_eq!(day1.indicators, vec![("cpi".to_string(), -0.5), ("lpr".to_string(), 3.45)]);
        assert_eq!(day1.narrative, "The latest cpi is -0.5. The latest lpr is 3.45.");
        assert_eq!(ds.macro_day(0).indicators.len(), 1);
    }

    #[test]
    fn bar_validation() {
        let mut bar = PriceBar::flat(1.0);
        bar.limit_up = true;
        bar.limit_down = true;
        assert!(check_bar(&bar).is_err());
        assert!(check_bar(&PriceBar::flat(0.0)).is_err());
        let mut bar = PriceBar::flat(2.0);
        bar.ref_price = None;
        assert_eq!(bar.execution_price(), 2.0);
    }
}
