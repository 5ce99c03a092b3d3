//! Record schema, turnover classes and the dataset container shared by every
//! other module.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_CLASSES: usize = 5;

/// Ordinal turnover band. `A` is the lowest band, `E` the highest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TurnoverClass {
    A,
    B,
    C,
    D,
    E,
}

impl TurnoverClass {
    pub const ALL: [TurnoverClass; N_CLASSES] = [
        TurnoverClass::A,
        TurnoverClass::B,
        TurnoverClass::C,
        TurnoverClass::D,
        TurnoverClass::E,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<TurnoverClass> {
        Self::ALL.get(i).copied()
    }

    pub fn symbol(self) -> &'static str {
        match self {
            TurnoverClass::A => "A",
            TurnoverClass::B => "B",
            TurnoverClass::C => "C",
            TurnoverClass::D => "D",
            TurnoverClass::E => "E",
        }
    }

    /// Majority class of a histogram; ties resolve toward the lower class.
    pub fn argmax<T: PartialOrd + Copy>(counts: &[T; N_CLASSES]) -> TurnoverClass {
        let mut best = 0;
        for k in 1..N_CLASSES {
            if counts[k] > counts[best] {
                best = k;
            }
        }
        Self::ALL[best]
    }
}

impl fmt::Display for TurnoverClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for TurnoverClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(TurnoverClass::A),
            "B" | "b" => Ok(TurnoverClass::B),
            "C" | "c" => Ok(TurnoverClass::C),
            "D" | "d" => Ok(TurnoverClass::D),
            "E" | "e" => Ok(TurnoverClass::E),
            other => Err(Error::domain(format!("not a turnover class: {other:?}"))),
        }
    }
}

/// Closed turnover intervals, one per class, in currency units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnoverBins {
    bounds: [(f64, f64); N_CLASSES],
}

impl Default for TurnoverBins {
    fn default() -> Self {
        TurnoverBins {
            bounds: [
                (58_320.0, 18_291_986.0),
                (18_296_597.0, 37_731_606.0),
                (37_749_751.0, 121_233_543.0),
                (121_245_870.0, 300_360_881.0),
                (300_465_316.0, 19_085_311_470.0),
            ],
        }
    }
}

impl TurnoverBins {
    pub fn new(bounds: [(f64, f64); N_CLASSES]) -> Result<Self> {
        let bins = TurnoverBins { bounds };
        bins.check()?;
        Ok(bins)
    }

    /// Checks that every interval is finite, ordered and strictly above the previous one.
    pub fn check(&self) -> Result<()> {
        for (k, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::domain(format!(
                    "bin {k} has invalid interval [{lo}, {hi}]"
                )));
            }
            if k > 0 && lo <= self.bounds[k - 1].1 {
                return Err(Error::domain(format!(
                    "bin {k} starts at {lo}, not above the previous upper bound {}",
                    self.bounds[k - 1].1
                )));
            }
        }
        Ok(())
    }

    pub fn bounds(&self) -> &[(f64, f64); N_CLASSES] {
        &self.bounds
    }

    /// Maps a turnover value to its class.
    ///
    /// Values inside an interval get that interval's class. Values in the gap
    /// between two intervals go to the nearer boundary, with exact ties going
    /// to the lower class. Values below the first interval map to `A` and
    /// values above the last map to `E`.
    pub fn discretize(&self, value: f64) -> Result<TurnoverClass> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::domain(format!(
                "turnover must be finite and non-negative, got {value}"
            )));
        }
        let b = &self.bounds;
        if value < b[0].0 {
            return Ok(TurnoverClass::A);
        }
        for k in 0..N_CLASSES {
            let (lo, hi) = b[k];
            if value >= lo && value <= hi {
                return Ok(TurnoverClass::ALL[k]);
            }
            if k + 1 < N_CLASSES && value > hi && value < b[k + 1].0 {
                let below = value - hi;
                let above = b[k + 1].0 - value;
                let k = if below <= above { k } else { k + 1 };
                return Ok(TurnoverClass::ALL[k]);
            }
        }
        Ok(TurnoverClass::E)
    }
}

/// One daily trading row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockRecord {
    pub date: NaiveDate,
    pub company: String,
    pub open_price: f64,
    pub high_price: f64,
    pub low_price: f64,
    pub close_price: f64,
    pub wap: f64,
    pub no_of_shares: f64,
    pub no_of_trades: f64,
    pub deliverable_quantity: f64,
    pub spread_high_low: f64,
    pub spread_close_open: f64,
    pub total_turnover: f64,
}

const SPREAD_TOLERANCE: f64 = 1e-6;

/// Returns one message per violated record invariant; empty when the record is valid.
pub fn validate_record(r: &StockRecord) -> Vec<String> {
    let mut out = Vec::new();
    let prices = [
        ("open_price", r.open_price),
        ("high_price", r.high_price),
        ("low_price", r.low_price),
        ("close_price", r.close_price),
        ("wap", r.wap),
        ("no_of_shares", r.no_of_shares),
        ("no_of_trades", r.no_of_trades),
        ("deliverable_quantity", r.deliverable_quantity),
        ("spread_high_low", r.spread_high_low),
        ("spread_close_open", r.spread_close_open),
        ("total_turnover", r.total_turnover),
    ];
    for (name, v) in prices {
        if !v.is_finite() {
            out.push(format!("{name} is finite violated: {name}={v}"));
        }
    }

    if r.low_price > r.high_price {
        out.push(format!(
            "low_price ≤ high_price violated: low_price={}, high_price={}",
            r.low_price, r.high_price
        ));
    } else if r.wap < r.low_price || r.wap > r.high_price {
        // Only meaningful once the price range itself is well formed.
        out.push(format!(
            "low_price ≤ wap ≤ high_price violated: low_price={}, wap={}, high_price={}",
            r.low_price, r.wap, r.high_price
        ));
    }
    if (r.spread_high_low - (r.high_price - r.low_price)).abs() > SPREAD_TOLERANCE {
        out.push(format!(
            "spread_high_low = high_price − low_price violated: spread_high_low={}, high_price={}, low_price={}",
            r.spread_high_low, r.high_price, r.low_price
        ));
    }
    for (name, v) in [
        ("no_of_shares", r.no_of_shares),
        ("no_of_trades", r.no_of_trades),
        ("deliverable_quantity", r.deliverable_quantity),
        ("total_turnover", r.total_turnover),
    ] {
        if v < 0.0 {
            out.push(format!("{name} ≥ 0 violated: {name}={v}"));
        }
    }
    if r.deliverable_quantity > r.no_of_shares {
        out.push(format!(
            "deliverable_quantity ≤ no_of_shares violated: deliverable_quantity={}, no_of_shares={}",
            r.deliverable_quantity, r.no_of_shares
        ));
    }
    out
}

/// Parses `YYYY-MM-DD` or the exchange-export style `DD-Month-YYYY`
/// (full or abbreviated month name).
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    ["%Y-%m-%d", "%d-%B-%Y", "%d-%b-%Y"]
        .iter()
        .find_map(|fmt| NaiveDate::parse_from_str(s, fmt).ok())
}

/// Numeric feature matrix with class labels.
///
/// Rows are stored row-major in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    feature_names: Vec<String>,
    values: Vec<f64>,
    labels: Vec<TurnoverClass>,
}

impl LabeledDataset {
    pub fn new(
        feature_names: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<TurnoverClass>,
    ) -> Result<Self> {
        let width = feature_names.len();
        let mut values = Vec::with_capacity(rows.len() * width);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::domain(format!(
                    "row {i} has {} values, expected {width}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::from_flat(feature_names, values, labels)
    }

    pub fn from_flat(
        feature_names: Vec<String>,
        values: Vec<f64>,
        labels: Vec<TurnoverClass>,
    ) -> Result<Self> {
        let width = feature_names.len();
        if values.len() != width * labels.len() {
            return Err(Error::domain(format!(
                "{} values cannot form {} rows of width {width}",
                values.len(),
                labels.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (i, j) = if width == 0 {
                (0, 0)
            } else {
                (pos / width, pos % width)
            };
            return Err(Error::domain(format!(
                "non-finite value at row {i}, feature {:?}",
                feature_names.get(j).map(String::as_str).unwrap_or("?")
            )));
        }
        Ok(LabeledDataset {
            feature_names,
            values,
            labels,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn labels(&self) -> &[TurnoverClass] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> TurnoverClass {
        self.labels[i]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.n_features();
        &self.values[i * w..(i + 1) * w]
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_features() + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.value(i, j)).collect()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn class_histogram(&self) -> [usize; N_CLASSES] {
        let mut h = [0; N_CLASSES];
        for l in &self.labels {
            h[l.index()] += 1;
        }
        h
    }

    /// New dataset holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> LabeledDataset {
        let mut values = Vec::with_capacity(rows.len() * self.n_features());
        for &i in rows {
            values.extend_from_slice(self.row(i));
        }
        LabeledDataset {
            feature_names: self.feature_names.clone(),
            values,
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// New dataset holding the given feature columns, in the given order.
    pub fn select_features(&self, features: &[usize]) -> LabeledDataset {
        let mut values = Vec::with_capacity(self.n_rows() * features.len());
        for i in 0..self.n_rows() {
            let row = self.row(i);
            values.extend(features.iter().map(|&j| row[j]));
        }
        LabeledDataset {
            feature_names: features
                .iter()
                .map(|&j| self.feature_names[j].clone())
                .collect(),
            values,
            labels: self.labels.clone(),
        }
    }

    /// Appends columns on the right. `columns[c]` must have one value per row.
    pub fn with_extra_columns(&self, names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() || columns.iter().any(|c| c.len() != self.n_rows()) {
            return Err(Error::domain(
                "extra columns do not match the dataset shape",
            ));
        }
        let width = self.n_features() + names.len();
        let mut values = Vec::with_capacity(self.n_rows() * width);
        for i in 0..self.n_rows() {
            values.extend_from_slice(self.row(i));
            values.extend(columns.iter().map(|c| c[i]));
        }
        let mut feature_names = self.feature_names.clone();
        feature_names.extend(names);
        Self::from_flat(feature_names, values, self.labels.clone())
    }

    pub fn into_parts(self) -> (Vec<String>, Vec<f64>, Vec<TurnoverClass>) {
        (self.feature_names, self.values, self.labels)
    }
}
