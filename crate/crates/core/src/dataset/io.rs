//! Delimited-text loader and writer for the dataset directory layout:
//! `prices.csv`, `features.csv`, `macro.csv`, `index.csv`, and the optional
//! `news.csv` and `stocks.csv`.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{
    bar_is_consistent, check_bar, fill_macro, DatasetSchema, MarketDataset, PriceBar, StockMeta,
    TextItem, TextKind, TradingCalendar, MISSING_TOKEN,
};
use crate::error::{Error, Result};

const PRICES: &str = "prices.csv";
const FEATURES: &str = "features.csv";
const NEWS: &str = "news.csv";
const MACRO: &str = "macro.csv";
const INDEX: &str = "index.csv";
const STOCKS: &str = "stocks.csv";

/// Non-fatal findings from a load.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    /// Feature or volume cells that were empty, `NA`, or unparseable.
    pub missing_cells: usize,
    /// Rows skipped because they reference a stock outside the universe.
    pub skipped_rows: usize,
    /// Bars violating `low <= min(open, close) <= max(open, close) <= high`.
    pub inconsistent_bars: usize,
    pub warnings: Vec<String>,
}

struct Table {
    file: &'static str,
    columns: HashMap<String, usize>,
    rows: Vec<(usize, csv::StringRecord)>,
}

impl Table {
    fn open(root: &Path, file: &'static str, required: bool) -> Result<Option<Self>> {
        let path = root.join(file);
        if !path.exists() {
            return if required {
                Err(Error::MissingFile(file.to_string()))
            } else {
                Ok(None)
            };
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(File::open(&path).map_err(|e| Error::io(&path, e))?);
        let headers = reader
            .headers()
            .map_err(|e| Error::parse(file, e.to_string()))?
            .clone();
        let columns = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().to_string(), i))
            .collect();
        let mut rows = Vec::new();
        for (n, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(file, e.to_string()))?;
            // header is line 1
            rows.push((n + 2, rec));
        }
        Ok(Some(Self {
            file,
            columns,
            rows,
        }))
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.columns
            .get(name)
            .copied()
            .ok_or_else(|| Error::parse(self.file, format!("missing column {name:?}")))
    }

    fn field<'a>(&self, rec: &'a csv::StringRecord, col: usize) -> &'a str {
        rec.get(col).unwrap_or("").trim()
    }

    fn date(&self, line: usize, rec: &csv::StringRecord, col: usize) -> Result<NaiveDate> {
        let raw = self.field(rec, col);
        NaiveDate::parse_from_str(raw, "%Y-%m-%d")
            .map_err(|_| Error::parse(self.file, format!("line {line}: bad date {raw:?}")))
    }

    fn number(&self, line: usize, rec: &csv::StringRecord, col: usize, name: &str) -> Result<f64> {
        parse_cell(self.field(rec, col))
            .ok_or_else(|| Error::parse(self.file, format!("line {line}: bad {name}")))
    }

    fn flag(&self, line: usize, rec: &csv::StringRecord, col: usize) -> Result<bool> {
        match self.field(rec, col) {
            "0" | "" | "false" => Ok(false),
            "1" | "true" => Ok(true),
            other => Err(Error::parse(self.file, format!("line {line}: bad flag {other:?}"))),
        }
    }
}

fn parse_cell(raw: &str) -> Option<f64> {
    if raw.is_empty() || raw.eq_ignore_ascii_case(MISSING_TOKEN) {
        return None;
    }
    raw.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Loads and cross-validates a dataset directory against `schema`.
pub fn load_dataset(root: &Path, schema: &DatasetSchema) -> Result<MarketDataset> {
    let prices = Table::open(root, PRICES, true)?.expect("required");
    let features = Table::open(root, FEATURES, true)?.expect("required");
    let macro_tbl = Table::open(root, MACRO, true)?.expect("required");
    let index = Table::open(root, INDEX, true)?.expect("required");
    let news = Table::open(root, NEWS, false)?;
    let stocks_tbl = Table::open(root, STOCKS, false)?;

    let mut report = LoadReport::default();

    // Calendar and universe come from prices.csv.
    let (p_date, p_stock) = (prices.col("date")?, prices.col("stock")?);
    let mut dates = BTreeSet::new();
    let mut universe = BTreeSet::new();
    for (line, rec) in &prices.rows {
        dates.insert(prices.date(*line, rec, p_date)?);
        let stock = prices.field(rec, p_stock);
        if stock.is_empty() {
            return Err(Error::parse(PRICES, format!("line {line}: empty stock")));
        }
        universe.insert(stock.to_string());
    }
    let calendar = TradingCalendar::new(dates.into_iter().collect())?;
    let mut builder = MarketDataset::builder(schema.clone(), calendar.days().to_vec(), universe.into_iter().collect())?;
    let ds = &mut builder.ds;

    let day_of = |file: &str, date: NaiveDate| {
        calendar
            .index_of(date)
            .ok_or_else(|| Error::Calendar(format!("{file} references {date}, which is not a trading day")))
    };

    // prices
    let cols = ["open", "high", "low", "close", "volume", "value", "limit_up", "limit_down"]
        .map(|c| prices.col(c));
    let [c_open, c_high, c_low, c_close, c_vol, c_val, c_up, c_down] = {
        let mut out = [0usize; 8];
        for (o, c) in out.iter_mut().zip(cols) {
            *o = c?;
        }
        out
    };
    let c_ref = prices.columns.get("ref_price").copied();
    for (line, rec) in &prices.rows {
        let day = day_of(PRICES, prices.date(*line, rec, p_date)?)?;
        let s = ds.stock_index[prices.field(rec, p_stock)];
        let mut optional = |col: usize| {
            let v = parse_cell(prices.field(rec, col));
            if v.is_none() {
                report.missing_cells += 1;
            }
            v
        };
        let volume = optional(c_vol);
        let value = optional(c_val);
        let ref_price = c_ref.and_then(|c| parse_cell(prices.field(rec, c)));
        let bar = PriceBar {
            open: prices.number(*line, rec, c_open, "open")?,
            high: prices.number(*line, rec, c_high, "high")?,
            low: prices.number(*line, rec, c_low, "low")?,
            close: prices.number(*line, rec, c_close, "close")?,
            volume,
            value,
            ref_price,
            limit_up: prices.flag(*line, rec, c_up)?,
            limit_down: prices.flag(*line, rec, c_down)?,
        };
        check_bar(&bar).map_err(|m| Error::parse(PRICES, format!("line {line}: {m}")))?;
        if !bar_is_consistent(&bar) {
            report.inconsistent_bars += 1;
        }
        if ds.bars[day][s].replace(bar).is_some() {
            return Err(Error::parse(PRICES, format!("line {line}: duplicate (date, stock)")));
        }
    }

    // features
    let (f_date, f_stock) = (features.col("date")?, features.col("stock")?);
    let mut f_cols = Vec::with_capacity(schema.features.len());
    for name in &schema.features {
        let col = features.columns.get(name).copied().ok_or_else(|| {
            Error::Config(format!("{FEATURES} lacks schema feature column {name:?}"))
        })?;
        f_cols.push(col);
    }
    for name in features.columns.keys() {
        if name != "date" && name != "stock" && schema.feature_position(name).is_none() {
            report
                .warnings
                .push(format!("{FEATURES}: column {name:?} not in schema, ignored"));
        }
    }
    report.warnings.sort();
    for (line, rec) in &features.rows {
        let day = day_of(FEATURES, features.date(*line, rec, f_date)?)?;
        let Some(&s) = ds.stock_index.get(features.field(rec, f_stock)) else {
            report.skipped_rows += 1;
            continue;
        };
        let row: Vec<Option<f64>> = f_cols
            .iter()
            .map(|&c| parse_cell(features.field(rec, c)))
            .collect();
        report.missing_cells += row.iter().filter(|v| v.is_none()).count();
        ds.features[day][s] = Some(row);
    }

    if let Some(news) = &news {
        let cols = ["date", "stock", "kind", "title", "summary"].map(|c| news.col(c));
        let mut c = [0usize; 5];
        for (o, r) in c.iter_mut().zip(cols) {
            *o = r?;
        }
        for (line, rec) in &news.rows {
            let day = day_of(NEWS, news.date(*line, rec, c[0])?)?;
            let Some(&s) = ds.stock_index.get(news.field(rec, c[1])) else {
                report.skipped_rows += 1;
                continue;
            };
            let kind = TextKind::parse(news.field(rec, c[2]))
                .ok_or_else(|| Error::parse(NEWS, format!("line {line}: unknown kind")))?;
            ds.texts[day][s].push(TextItem {
                kind,
                title: news.field(rec, c[3]).to_string(),
                summary: news.field(rec, c[4]).to_string(),
            });
        }
    }

    let (m_date, m_ind, m_val) = (macro_tbl.col("date")?, macro_tbl.col("indicator")?, macro_tbl.col("value")?);
    for (line, rec) in &macro_tbl.rows {
        let day = day_of(MACRO, macro_tbl.date(*line, rec, m_date)?)?;
        let name = macro_tbl.field(rec, m_ind);
        if !schema.macro_indicators.is_empty() && !schema.macro_indicators.iter().any(|m| m == name) {
            report.skipped_rows += 1;
            continue;
        }
        match parse_cell(macro_tbl.field(rec, m_val)) {
            Some(v) => {
                ds.macro_raw[day].insert(name.to_string(), v);
            }
            None => report.missing_cells += 1,
        }
    }

    let (i_date, i_close) = (index.col("date")?, index.col("index_close")?);
    for (line, rec) in &index.rows {
        let day = day_of(INDEX, index.date(*line, rec, i_date)?)?;
        let close = index.number(*line, rec, i_close, "index_close")?;
        if close <= 0.0 {
            return Err(Error::parse(INDEX, format!("line {line}: non-positive close")));
        }
        ds.index_close[day] = Some(close);
    }
    let missing_index = ds.index_close.iter().filter(|c| c.is_none()).count();
    if missing_index > 0 {
        report
            .warnings
            .push(format!("{INDEX}: {missing_index} trading days without a benchmark close"));
    }

    if let Some(tbl) = &stocks_tbl {
        let c_stock = tbl.col("stock")?;
        let c_ind = tbl.columns.get("industry").copied();
        let c_cap = tbl.columns.get("market_cap").copied();
        for (_, rec) in &tbl.rows {
            let Some(&s) = ds.stock_index.get(tbl.field(rec, c_stock)) else {
                report.skipped_rows += 1;
                continue;
            };
            ds.meta[s] = StockMeta {
                industry: c_ind
                    .map(|c| tbl.field(rec, c).to_string())
                    .filter(|v| !v.is_empty()),
                market_cap: c_cap.and_then(|c| parse_cell(tbl.field(rec, c))),
            };
        }
    }

    if report.skipped_rows > 0 {
        log::warn!("dataset load skipped {} rows referencing unknown stocks", report.skipped_rows);
    }
    ds.macro_days = fill_macro(&ds.schema, &ds.calendar, &ds.macro_raw);
    ds.report = report;
    Ok(builder.ds)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn writer(dir: &Path, file: &str) -> Result<csv::Writer<File>> {
    let path = dir.join(file);
    let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn csv_err(file: &str) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::parse(file, e.to_string())
}

/// Writes a dataset in the layout [`load_dataset`] reads, plus `schema.toml`.
/// Numeric fields use shortest round-trip formatting, so a reload is
/// bit-exact.
pub fn save_dataset(ds: &MarketDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let schema_path = dir.join("schema.toml");
    std::fs::write(&schema_path, ds.schema.to_toml()).map_err(|e| Error::io(&schema_path, e))?;

    let mut w = writer(dir, PRICES)?;
    w.write_record([
        "date", "stock", "open", "high", "low", "close", "volume", "value", "ref_price", "limit_up", "limit_down",
    ])
    .map_err(csv_err(PRICES))?;
    for (day, date) in ds.calendar.days().iter().enumerate() {
        for (s, stock) in ds.stocks.iter().enumerate() {
            if let Some(b) = &ds.bars[day][s] {
                w.write_record([
                    date.to_string(),
                    stock.clone(),
                    b.open.to_string(),
                    b.high.to_string(),
                    b.low.to_string(),
                    b.close.to_string(),
                    cell(b.volume),
                    cell(b.value),
                    cell(b.ref_price),
                    u8::from(b.limit_up).to_string(),
                    u8::from(b.limit_down).to_string(),
                ])
                .map_err(csv_err(PRICES))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(dir.join(PRICES), e))?;

    let mut w = writer(dir, FEATURES)?;
    let mut header = vec!["date".to_string(), "stock".to_string()];
    header.extend(ds.schema.features.iter().cloned());
    w.write_record(&header).map_err(csv_err(FEATURES))?;
    for (day, date) in ds.calendar.days().iter().enumerate() {
        for (s, stock) in ds.stocks.iter().enumerate() {
            if let Some(row) = &ds.features[day][s] {
                let mut rec = vec![date.to_string(), stock.clone()];
                rec.extend(row.iter().map(|v| cell(*v)));
                w.write_record(&rec).map_err(csv_err(FEATURES))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(dir.join(FEATURES), e))?;

    let mut w = writer(dir, NEWS)?;
    w.write_record(["date", "stock", "kind", "title", "summary"])
        .map_err(csv_err(NEWS))?;
    for (day, date) in ds.calendar.days().iter().enumerate() {
        for (s, stock) in ds.stocks.iter().enumerate() {
            for t in &ds.texts[day][s] {
                w.write_record([date.to_string().as_str(), stock, t.kind.as_str(), &t.title, &t.summary])
                    .map_err(csv_err(NEWS))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(dir.join(NEWS), e))?;

    let mut w = writer(dir, MACRO)?;
    w.write_record(["date", "indicator", "value"]).map_err(csv_err(MACRO))?;
    for (day, obs) in ds.macro_raw.iter().enumerate() {
        for (k, v) in obs {
            w.write_record([ds.calendar.date(day).to_string(), k.clone(), v.to_string()])
                .map_err(csv_err(MACRO))?;
        }
    }
    w.flush().map_err(|e| Error::io(dir.join(MACRO), e))?;

    let mut w = writer(dir, INDEX)?;
    w.write_record(["date", "index_close"]).map_err(csv_err(INDEX))?;
    for (day, close) in ds.index_close.iter().enumerate() {
        if let Some(c) = close {
            w.write_record([ds.calendar.date(day).to_string(), c.to_string()])
                .map_err(csv_err(INDEX))?;
        }
    }
    w.flush().map_err(|e| Error::io(dir.join(INDEX), e))?;

    if ds.meta.iter().any(|m| m.industry.is_some() || m.market_cap.is_some()) {
        let mut w = writer(dir, STOCKS)?;
        w.write_record(["stock", "industry", "market_cap"]).map_err(csv_err(STOCKS))?;
        for (s, stock) in ds.stocks.iter().enumerate() {
            let m = &ds.meta[s];
            w.write_record([stock.clone(), m.industry.clone().unwrap_or_default(), cell(m.market_cap)])
                .map_err(csv_err(STOCKS))?;
        }
        w.flush().map_err(|e| Error::io(dir.join(STOCKS), e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) {
        fs::write(dir.join(name), body).unwrap();
    }

    fn fixture(dir: &Path) -> DatasetSchema {
        write(
            dir,
            PRICES,
            "date,stock,open,high,low,close,volume,value,ref_price,limit_up,limit_down\n\
             2023-01-03,A,10,11,9,10.5,100,1000,10.1,0,0\n\
             2023-01-03,B,20,21,19,20.5,100,2000,20.1,0,0\n\
             2023-01-04,A,10.5,11,10,10.8,100,1000,10.6,1,0\n\
             2023-01-04,B,20.5,21,20,20.2,100,2000,20.4,0,0\n\
             2023-01-05,A,10.8,11,10,10.9,100,1000,10.7,0,0\n\
             2023-01-05,B,20.2,21,20,20.9,100,2000,,0,1\n",
        );
        write(
            dir,
            FEATURES,
            "date,stock,E/P,B/P\n\
             2023-01-03,A,0.1,0.2\n2023-01-03,B,0.3,0.4\n\
             2023-01-04,A,0.1,0.2\n2023-01-04,B,0.3,0.4\n\
             2023-01-05,A,0.1,0.2\n2023-01-05,B,0.3,0.4\n",
        );
        write(dir, NEWS, "date,stock,kind,title,summary\n2023-01-04,A,news,Up,\"Rose, sharply\"\n");
        write(dir, MACRO, "date,indicator,value\n2023-01-03,cpi,-0.5\n");
        write(dir, INDEX, "date,index_close\n2023-01-03,3000\n2023-01-04,3010\n2023-01-05,3020\n");
        DatasetSchema::new(vec!["E/P".into(), "B/P".into()])
    }

    #[test]
    fn loads_complete_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let schema = fixture(dir.path());
        let ds = load_dataset(dir.path(), &schema).unwrap();
        assert_eq!(ds.calendar().len(), 3);
        assert_eq!(ds.stocks().len(), 2);
        assert_eq!(ds.load_report().missing_cells, 0);
        assert!(ds.bar(1, 0).unwrap().limit_up);
        assert_eq!(ds.bar(2, 1).unwrap().ref_price, None);
        assert_eq!(ds.texts(1, 0)[0].summary, "Rose, sharply");
        assert_eq!(ds.macro_day(2).indicators, vec![("cpi".to_string(), -0.5)]);
    }

    #[test]
    fn missing_prices_is_fatal_and_named() {
        let dir = tempfile::tempdir().unwrap();
        let schema = fixture(dir.path());
        fs::remove_file(dir.path().join(PRICES)).unwrap();
        let err = load_dataset(dir.path(), &schema).unwrap_err();
        assert!(err.to_string().contains("prices"), "{err}");
    }

    #[test]
    fn malformed_cell_is_recorded_missing() {
        let dir = tempfile::tempdir().unwrap();
        let schema = fixture(dir.path());
        let body = fs::read_to_string(dir.path().join(FEATURES)).unwrap();
        write(dir.path(), FEATURES, &body.replacen("0.3,0.4", "0.3,abc", 1));
        let ds = load_dataset(dir.path(), &schema).unwrap();
        assert_eq!(ds.load_report().missing_cells, 1);
        assert_eq!(ds.feature_row(0, 1).unwrap(), &[Some(0.3), None]);
    }

    #[test]
    fn unknown_stock_rows_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let schema = fixture(dir.path());
        let mut body = fs::read_to_string(dir.path().join(FEATURES)).unwrap();
        body.push_str("2023-01-05,ZZZ,1,1\n");
        write(dir.path(), FEATURES, &body);
        let ds = load_dataset(dir.path(), &schema).unwrap();
        assert_eq!(ds.load_report().skipped_rows, 1);
    }

    #[test]
    fn off_calendar_date_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let schema = fixture(dir.path());
        write(dir.path(), INDEX, "date,index_close\n2023-01-07,3000\n");
        assert!(matches!(load_dataset(dir.path(), &schema), Err(Error::Calendar(_))));
    }

    #[test]
    fn schema_column_absent_from_file() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        let schema = DatasetSchema::new(vec!["ROE".into()]);
        assert!(matches!(load_dataset(dir.path(), &schema), Err(Error::Config(_))));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let schema = fixture(dir.path());
        let ds = load_dataset(dir.path(), &schema).unwrap();
        let out = tempfile::tempdir().unwrap();
        save_dataset(&ds, out.path()).unwrap();
        let back = load_dataset(out.path(), &schema).unwrap();
        assert_eq!(back.bars, ds.bars);
        assert_eq!(back.features, ds.features);
        assert_eq!(back.texts, ds.texts);
        assert_eq!(back.index_close, ds.index_close);
        assert_eq!(back.macro_days, ds.macro_days);
    }
}
