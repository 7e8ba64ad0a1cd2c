//! Seeded synthetic markets with a planted return structure.
//!
//! Features are i.i.d. standard normal per (stock, day). The forward return
//! label of day `j` is
//! `0.01 * (signal_strength * f_k[s, j] + return_noise * eps[s, j])`,
//! where `k` is the informative feature of the regime containing `j`.
//! Reference prices are built backwards from those labels, so
//! [`compute_labels`](crate::dataset::compute_labels) recovers them exactly.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetSchema, MarketDataset, PriceBar, StockMeta};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticMarket {
    pub n_stocks: usize,
    pub n_days: usize,
    pub n_features: usize,
    pub seed: u64,
    /// First calendar day; the calendar is the following weekdays.
    pub start: NaiveDate,
    /// `(first day, informative feature)` pairs in ascending day order.
    pub regimes: Vec<(usize, usize)>,
    pub signal_strength: f64,
    pub return_noise: f64,
    pub n_industries: usize,
    /// Probability that a stock-day carries a limit-up or limit-down flag.
    pub limit_rate: f64,
}

impl Default for SyntheticMarket {
    fn default() -> Self {
        Self {
            n_stocks: 30,
            n_days: 20,
            n_features: 4,
            seed: 7,
            start: NaiveDate::from_ymd_opt(2023, 1, 2).expect("valid date"),
            regimes: vec![(0, 0)],
            signal_strength: 1.0,
            return_noise: 1.0,
            n_industries: 5,
            limit_rate: 0.0,
        }
    }
}

pub fn feature_name(k: usize) -> String {
    format!("f{k}")
}

pub fn stock_name(s: usize) -> String {
    format!("S{s:04}")
}

/// `n` consecutive weekdays starting at (or after) `start`.
pub fn weekdays(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

impl SyntheticMarket {
    /// Informative feature on `day`.
    pub fn informative_feature(&self, day: usize) -> usize {
        self.regimes
            .iter()
            .rev()
            .find(|(start, _)| *start <= day)
            .map_or(0, |(_, k)| *k)
    }

    pub fn generate(&self) -> MarketDataset {
        assert!(self.n_features >= 1, "synthetic market needs at least one feature");
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let features: Vec<String> = (0..self.n_features).map(feature_name).collect();
        let mut schema = DatasetSchema::new(features.clone());
        schema.macro_indicators = vec!["CPI".into(), "rate".into()];
        for (k, f) in features.iter().enumerate() {
            schema
                .descriptions
                .insert(f.clone(), format!("Synthetic factor {k}, cross-sectionally standard normal."));
        }
        let days = weekdays(self.start, self.n_days);
        let stocks: Vec<String> = (0..self.n_stocks).map(stock_name).collect();

        let values: Vec<Vec<Vec<f64>>> = (0..self.n_days)
            .map(|_| {
                (0..self.n_stocks)
                    .map(|_| (0..self.n_features).map(|_| rng.sample(StandardNormal)).collect())
                    .collect()
            })
            .collect();

        // ref[j] per stock; ref[j + 2] = ref[j + 1] * (1 + Y[j]).
        let mut refs = vec![vec![0.0; self.n_stocks]; self.n_days];
        for s in 0..self.n_stocks {
            let base = 10.0 + 90.0 * rng.gen::<f64>();
            refs[0][s] = base;
            if self.n_days > 1 {
                refs[1][s] = base;
            }
        }
        for j in 0..self.n_days.saturating_sub(2) {
            let k = self.informative_feature(j).min(self.n_features - 1);
            for s in 0..self.n_stocks {
                let eps: f64 = rng.sample(StandardNormal);
                let y = 0.01 * (self.signal_strength * values[j][s][k] + self.return_noise * eps);
                refs[j + 2][s] = refs[j + 1][s] * (1.0 + y.max(-0.5));
            }
        }

        let mut b = MarketDataset::builder(schema, days.clone(), stocks.clone()).expect("weekday calendar is ascending");
        for (s, code) in stocks.iter().enumerate() {
            b.meta(
                code,
                StockMeta {
                    industry: Some(format!("industry{}", s % self.n_industries.max(1))),
                    market_cap: Some((rng.gen::<f64>() * 3.0).exp() * 1e9),
                },
            )
            .expect("known stock");
        }
        let mut rate = 2.0;
        for (j, date) in days.iter().enumerate() {
            for (s, code) in stocks.iter().enumerate() {
                let mut bar = PriceBar::flat(refs[j][s]);
                bar.volume = Some(1e6);
                bar.value = Some(1e6 * refs[j][s]);
                if self.limit_rate > 0.0 && rng.gen_bool(self.limit_rate.min(1.0)) {
                    if rng.gen_bool(0.5) {
                        bar.limit_up = true;
                    } else {
                        bar.limit_down = true;
                    }
                }
                b.bar(j, code, bar).expect("valid bar");
                b.features(j, code, values[j][s].iter().map(|v| Some(*v)).collect())
                    .expect("row matches schema");
            }
            if j == 0 || date.month() != days[j - 1].month() {
                b.macro_value(j, "CPI", 100.0 + rng.gen_range(-1.0..1.0));
            }
            rate += rng.gen_range(-0.02..0.02);
            b.macro_value(j, "rate", (rate * 1e4_f64).round() / 1e4);
            let mean: f64 = refs[j].iter().sum::<f64>() / self.n_stocks.max(1) as f64;
            let base: f64 = refs[0].iter().sum::<f64>() / self.n_stocks.max(1) as f64;
            b.index_close(j, 1000.0 * mean / base);
        }
        b.build()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::compute_labels;

    #[test]
    fn labels_follow_the_planted_feature() {
        let m = SyntheticMarket { n_stocks: 200, n_days: 6, return_noise: 0.0, ..SyntheticMarket::default() };
        let ds = m.generate();
        let labels = compute_labels(&ds);
        for j in 0..4 {
            for s in 0..200 {
                let f0 = ds.feature_row(j, s).unwrap()[0].unwrap();
                let y = labels.get(j, s).unwrap();
                assert!((y - 0.01 * f0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn regime_lookup() {
        let m = SyntheticMarket { regimes: vec![(0, 0), (10, 1)], ..SyntheticMarket::default() };
        assert_eq!(m.informative_feature(9), 0);
        assert_eq!(m.informative_feature(10), 1);
    }

    #[test]
    fn calendar_skips_weekends() {
        let d = weekdays(NaiveDate::from_ymd_opt(2023, 1, 6).unwrap(), 3);
        assert_eq!(d[1], NaiveDate::from_ymd_opt(2023, 1, 9).unwrap());
    }
}
