//! Forward-return labels.
//!
//! The label of day `j` is the one-day return executable in the first fifteen
//! minutes of day `j+1`, marked at the same window on day `j+2`:
//! `ref(j+2) / ref(j+1) - 1`, with the open standing in for a missing
//! reference price. Because it depends on day `j+2` prices, it becomes known
//! only during day `j+2`.

use super::MarketDataset;

/// Calendar distance between a label's date and the first end-of-day at which
/// it may be used.
pub const LABEL_AVAILABILITY_LAG: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    values: Vec<Vec<Option<f64>>>,
}

impl LabelMatrix {
    pub fn from_values(values: Vec<Vec<Option<f64>>>) -> Self {
        Self { values }
    }

    pub fn n_days(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, day: usize, stock: usize) -> Option<f64> {
        self.values.get(day).and_then(|row| row.get(stock).copied().flatten())
    }

    pub fn day(&self, day: usize) -> &[Option<f64>] {
        &self.values[day]
    }

    /// Latest label day known at the end of `day`, if any.
    pub fn availability(&self, day: usize) -> Option<usize> {
        day.checked_sub(LABEL_AVAILABILITY_LAG)
    }

    pub fn is_available(&self, label_day: usize, at_end_of: usize) -> bool {
        self.availability(at_end_of).is_some_and(|a| label_day <= a)
    }

    pub fn len(&self) -> usize {
        self.values.iter().flatten().filter(|v| v.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn compute_labels(ds: &MarketDataset) -> LabelMatrix {
    let n_days = ds.calendar().len();
    let n_stocks = ds.stocks().len();
    let mut values = vec![vec![None; n_stocks]; n_days];
    if n_days < 3 {
        log::warn!("{n_days} trading days: too few to form any label");
        return LabelMatrix { values };
    }
    for (day, row) in values.iter_mut().enumerate().take(n_days - 2) {
        for (s, cell) in row.iter_mut().enumerate() {
            let entry = ds.bar(day + 1, s).map(|b| b.execution_price());
            let exit = ds.bar(day + 2, s).map(|b| b.execution_price());
            if let (Some(p0), Some(p1)) = (entry, exit) {
                *cell = Some(p1 / p0 - 1.0);
            }
        }
    }
    LabelMatrix { values }
}
