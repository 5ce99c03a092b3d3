//! CSV ingestion, cleaning, one-hot encoding and the train/validation split.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data_model::{
    parse_date, validate_record, LabeledDataset, StockRecord, TurnoverBins, TurnoverClass,
    N_CLASSES,
};
use crate::error::{Error, Result};
use crate::seed;

/// The attributes of a daily share record, as they appear in exchange exports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Column {
    Date,
    OpenPrice,
    HighPrice,
    LowPrice,
    ClosePrice,
    Wap,
    NoOfShares,
    NoOfTrades,
    TotalTurnover,
    DeliverableQuantity,
    SpreadHighLow,
    SpreadCloseOpen,
    Company,
}

impl Column {
    pub const ALL: [Column; 13] = [
        Column::Date,
        Column::OpenPrice,
        Column::HighPrice,
        Column::LowPrice,
        Column::ClosePrice,
        Column::Wap,
        Column::NoOfShares,
        Column::NoOfTrades,
        Column::TotalTurnover,
        Column::DeliverableQuantity,
        Column::SpreadHighLow,
        Column::SpreadCloseOpen,
        Column::Company,
    ];

    /// Header text used when writing cleaned records.
    pub fn header(self) -> &'static str {
        match self {
            Column::Date => "Date",
            Column::OpenPrice => "Open Price",
            Column::HighPrice => "High Price",
            Column::LowPrice => "Low Price",
            Column::ClosePrice => "Close Price",
            Column::Wap => "WAP",
            Column::NoOfShares => "No.of Shares",
            Column::NoOfTrades => "No. of Trades",
            Column::TotalTurnover => "Total Turnover",
            Column::DeliverableQuantity => "Deliverable Quantity",
            Column::SpreadHighLow => "Spread High-Low",
            Column::SpreadCloseOpen => "Spread Close-Open",
            Column::Company => "Company",
        }
    }

    fn aliases(self) -> &'static [&'static str] {
        match self {
            Column::Date => &["date"],
            Column::OpenPrice => &["openprice", "open"],
            Column::HighPrice => &["highprice", "high"],
            Column::LowPrice => &["lowprice", "low"],
            Column::ClosePrice => &["closeprice", "close"],
            Column::Wap => &["wap"],
            Column::NoOfShares => &["noofshares"],
            Column::NoOfTrades => &["nooftrades"],
            Column::TotalTurnover => &["totalturnover", "totalturnoverrs"],
            Column::DeliverableQuantity => &["deliverablequantity", "deliverableqty"],
            Column::SpreadHighLow => &["spreadhighlow"],
            Column::SpreadCloseOpen => &["spreadcloseopen"],
            Column::Company => &["company"],
        }
    }

    fn matches(self, header: &str) -> bool {
        let key = normalize_header(header);
        self.aliases().contains(&key.as_str())
    }
}

/// Numeric record attributes in feature order, with their feature names.
pub const NUMERIC_FEATURES: [(Column, &str); 10] = [
    (Column::OpenPrice, "open_price"),
    (Column::HighPrice, "high_price"),
    (Column::LowPrice, "low_price"),
    (Column::ClosePrice, "close_price"),
    (Column::Wap, "wap"),
    (Column::NoOfShares, "no_of_shares"),
    (Column::NoOfTrades, "no_of_trades"),
    (Column::DeliverableQuantity, "deliverable_quantity"),
    (Column::SpreadHighLow, "spread_high_low"),
    (Column::SpreadCloseOpen, "spread_close_open"),
];

pub const DATE_FEATURE: &str = "date";
pub const TURNOVER_FEATURE: &str = "total_turnover";
pub const COMPANY_PREFIX: &str = "company=";

fn normalize_header(h: &str) -> String {
    h.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("n/a") || c == "-"
}

/// Parsed-but-uncleaned CSV contents. `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<String>>>,
    /// Non-fatal findings such as unrecognised columns.
    pub warnings: Vec<String>,
    columns: Vec<(Column, usize)>,
}

impl RawTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn position(&self, col: Column) -> Option<usize> {
        self.columns
            .iter()
            .find(|(c, _)| *c == col)
            .map(|&(_, i)| i)
    }
}

/// Reads a header-first CSV and checks that every column in `required` is present.
///
/// Header matching ignores case, whitespace and punctuation, so `No.of Shares`,
/// `No of shares` and `no_of_shares` are the same column. Extra columns are
/// kept and listed in `warnings`.
pub fn parse_csv<R: Read>(input: R, required: &[Column]) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(input);
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().trim_start_matches('\u{feff}').to_string())
        .collect();

    let mut columns = Vec::new();
    let mut warnings = Vec::new();
    for (i, h) in header.iter().enumerate() {
        match Column::ALL.iter().find(|c| c.matches(h)) {
            Some(&c) if columns.iter().any(|&(seen, _)| seen == c) => {
                warnings.push(format!("duplicate column {h:?} ignored"));
            }
            Some(&c) => columns.push((c, i)),
            None => warnings.push(format!("unrecognised column {h:?} retained")),
        }
    }
    for col in required {
        if !columns.iter().any(|(c, _)| c == col) {
            return Err(Error::Schema(format!("missing column {}", col.header())));
        }
    }

    let mut rows = Vec::new();
    for (n, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row_no = n + 1;
        if rec.len() == 1 && rec.get(0).is_some_and(|c| c.trim().is_empty()) && header.len() > 1 {
            continue;
        }
        if rec.len() != header.len() {
            return Err(Error::Parse {
                row: row_no,
                message: format!("expected {} cells, found {}", header.len(), rec.len()),
            });
        }
        rows.push(
            rec.iter()
                .map(|c| {
                    if is_missing(c) {
                        None
                    } else {
                        Some(c.trim().to_string())
                    }
                })
                .collect(),
        );
    }
    Ok(RawTable {
        header,
        rows,
        warnings,
        columns,
    })
}

/// Removes every row that has at least one missing cell. Returns the number removed.
pub fn drop_missing(t: RawTable) -> (RawTable, usize) {
    let before = t.rows.len();
    let rows: Vec<_> = t
        .rows
        .into_iter()
        .filter(|r| r.iter().all(Option::is_some))
        .collect();
    let dropped = before - rows.len();
    (RawTable { rows, ..t }, dropped)
}

/// Parses a number, tolerating thousands separators.
pub fn parse_number(cell: &str) -> Option<f64> {
    let cleaned: String = cell.trim().chars().filter(|&c| c != ',').collect();
    cleaned.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Converts table rows into records. A table without a turnover column
/// (prediction input) yields records with `total_turnover = 0`.
pub fn to_records(t: &RawTable) -> Result<Vec<StockRecord>> {
    let pos = |c: Column| t.position(c);
    let mut out = Vec::with_capacity(t.rows.len());
    for (n, row) in t.rows.iter().enumerate() {
        let row_no = n + 1;
        let cell = |c: Column| -> Result<&str> {
            let i =
                pos(c).ok_or_else(|| Error::Schema(format!("missing column {}", c.header())))?;
            row[i].as_deref().ok_or_else(|| Error::Parse {
                row: row_no,
                message: format!("missing value in column {}", c.header()),
            })
        };
        let num = |c: Column| -> Result<f64> {
            let s = cell(c)?;
            parse_number(s).ok_or_else(|| Error::Parse {
                row: row_no,
                message: format!("column {}: {s:?} is not a number", c.header()),
            })
        };
        let date_text = cell(Column::Date)?;
        let date = parse_date(date_text).ok_or_else(|| Error::Parse {
            row: row_no,
            message: format!("unrecognised date {date_text:?}"),
        })?;
        out.push(StockRecord {
            date,
            company: cell(Column::Company)?.to_string(),
            open_price: num(Column::OpenPrice)?,
            high_price: num(Column::HighPrice)?,
            low_price: num(Column::LowPrice)?,
            close_price: num(Column::ClosePrice)?,
            wap: num(Column::Wap)?,
            no_of_shares: num(Column::NoOfShares)?,
            no_of_trades: num(Column::NoOfTrades)?,
            deliverable_quantity: num(Column::DeliverableQuantity)?,
            spread_high_low: num(Column::SpreadHighLow)?,
            spread_close_open: num(Column::SpreadCloseOpen)?,
            total_turnover: if pos(Column::TotalTurnover).is_some() {
                num(Column::TotalTurnover)?
            } else {
                0.0
            },
        });
    }
    Ok(out)
}

/// Writes records with the canonical export header.
pub fn write_records_csv<W: Write>(records: &[StockRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(Column::ALL.iter().map(|c| c.header()))?;
    for r in records {
        w.write_record(&[
            r.date.format("%Y-%m-%d").to_string(),
            r.open_price.to_string(),
            r.high_price.to_string(),
            r.low_price.to_string(),
            r.close_price.to_string(),
            r.wap.to_string(),
            r.no_of_shares.to_string(),
            r.no_of_trades.to_string(),
            r.total_turnover.to_string(),
            r.deliverable_quantity.to_string(),
            r.spread_high_low.to_string(),
            r.spread_close_open.to_string(),
            r.company.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Turns records into feature vectors with a fixed company vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    /// Company vocabulary, sorted.
    pub companies: Vec<String>,
    /// Feature names removed from the full column list.
    pub exclusions: Vec<String>,
    feature_names: Vec<String>,
}

impl FeatureEncoder {
    pub fn default_exclusions() -> Vec<String> {
        vec![TURNOVER_FEATURE.to_string(), DATE_FEATURE.to_string()]
    }

    /// Builds the vocabulary from `records`. `exclusions` may name any feature,
    /// or `company` to drop every indicator column.
    pub fn fit(records: &[StockRecord], exclusions: &[String]) -> Result<Self> {
        let companies: BTreeSet<&str> = records.iter().map(|r| r.company.as_str()).collect();
        Self::with_vocabulary(
            companies.into_iter().map(str::to_string).collect(),
            exclusions,
        )
    }

    pub fn with_vocabulary(mut companies: Vec<String>, exclusions: &[String]) -> Result<Self> {
        companies.sort();
        companies.dedup();
        let all = Self::all_columns(&companies);
        for ex in exclusions {
            if ex != "company" && !all.contains(ex) {
                return Err(Error::Schema(format!(
                    "cannot exclude unknown feature {ex:?}; known: {all:?}"
                )));
            }
        }
        let feature_names = all
            .into_iter()
            .filter(|n| {
                !exclusions.contains(n)
                    && !(n.starts_with(COMPANY_PREFIX) && exclusions.iter().any(|e| e == "company"))
            })
            .collect();
        Ok(FeatureEncoder {
            companies,
            exclusions: exclusions.to_vec(),
            feature_names,
        })
    }

    fn all_columns(companies: &[String]) -> Vec<String> {
        let mut all: Vec<String> = NUMERIC_FEATURES
            .iter()
            .map(|(_, n)| n.to_string())
            .collect();
        all.push(DATE_FEATURE.to_string());
        all.push(TURNOVER_FEATURE.to_string());
        all.extend(companies.iter().map(|c| format!("{COMPANY_PREFIX}{c}")));
        all
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn encode(&self, r: &StockRecord) -> Result<Vec<f64>> {
        if self.companies.binary_search(&r.company).is_err() {
            return Err(Error::UnknownCompany {
                name: r.company.clone(),
                known: self.companies.clone(),
            });
        }
        let epoch = chrono::NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch");
        let out = self
            .feature_names
            .iter()
            .map(|name| match name.as_str() {
                "open_price" => r.open_price,
                "high_price" => r.high_price,
                "low_price" => r.low_price,
                "close_price" => r.close_price,
                "wap" => r.wap,
                "no_of_shares" => r.no_of_shares,
                "no_of_trades" => r.no_of_trades,
                "deliverable_quantity" => r.deliverable_quantity,
                "spread_high_low" => r.spread_high_low,
                "spread_close_open" => r.spread_close_open,
                DATE_FEATURE => (r.date - epoch).num_days() as f64,
                TURNOVER_FEATURE => r.total_turnover,
                other => {
                    let company = &other[COMPANY_PREFIX.len()..];
                    if company == r.company {
                        1.0
                    } else {
                        0.0
                    }
                }
            })
            .collect();
        Ok(out)
    }
}

/// Encodes records into a labelled dataset with the default exclusions
/// (turnover and date), labelling each row by its discretized turnover.
pub fn encode_features(records: &[StockRecord], bins: &TurnoverBins) -> Result<LabeledDataset> {
    let encoder = FeatureEncoder::fit(records, &FeatureEncoder::default_exclusions())?;
    encode_with(&encoder, records, bins)
}

pub fn encode_with(
    encoder: &FeatureEncoder,
    records: &[StockRecord],
    bins: &TurnoverBins,
) -> Result<LabeledDataset> {
    if records.is_empty() {
        return Err(Error::domain("cannot encode an empty record list"));
    }
    let mut values = Vec::with_capacity(records.len() * encoder.feature_names().len());
    let mut labels = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let violations = validate_record(r);
        if !violations.is_empty() {
            return Err(Error::domain(format!(
                "record {} is invalid: {}",
                i + 1,
                violations.join("; ")
            )));
        }
        values.extend(encoder.encode(r)?);
        labels.push(bins.discretize(r.total_turnover)?);
    }
    LabeledDataset::from_flat(encoder.feature_names().to_vec(), values, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    /// Per-class shuffled split preserving class proportions.
    StratifiedRandom,
    /// Sort by class (stable), then cut: the leading rows train.
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
    pub strategy: SplitStrategy,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 0.6,
            seed: 0,
            strategy: SplitStrategy::StratifiedRandom,
        }
    }
}

impl SplitConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::domain(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: LabeledDataset,
    pub valid: LabeledDataset,
    /// Indices into the input dataset, ascending.
    pub train_rows: Vec<usize>,
    pub valid_rows: Vec<usize>,
    pub warnings: Vec<String>,
}

pub const MIN_SPLIT_ROWS: usize = 5;

/// Splits `d` into training and validation parts.
///
/// The training part has `round(train_fraction × n)` rows. Both parts keep the
/// input row order.
pub fn split_train_validation(d: &LabeledDataset, cfg: &SplitConfig) -> Result<Split> {
    cfg.check()?;
    let n = d.n_rows();
    if n < MIN_SPLIT_ROWS {
        return Err(Error::domain(format!(
            "need at least {MIN_SPLIT_ROWS} rows to split, got {n}"
        )));
    }
    let target = (cfg.train_fraction * n as f64).round() as usize;
    let mut warnings = Vec::new();
    let mut train_rows = match cfg.strategy {
        SplitStrategy::Sequential => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by_key(|&i| d.label(i));
            order.truncate(target);
            order
        }
        SplitStrategy::StratifiedRandom => stratified_train_rows(d, cfg, target, &mut warnings),
    };
    train_rows.sort_unstable();
    let mut in_train = vec![false; n];
    for &i in &train_rows {
        in_train[i] = true;
    }
    let valid_rows: Vec<usize> = (0..n).filter(|&i| !in_train[i]).collect();
    Ok(Split {
        train: d.select_rows(&train_rows),
        valid: d.select_rows(&valid_rows),
        train_rows,
        valid_rows,
        warnings,
    })
}

fn stratified_train_rows(
    d: &LabeledDataset,
    cfg: &SplitConfig,
    target: usize,
    warnings: &mut Vec<String>,
) -> Vec<usize> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); N_CLASSES];
    for (i, l) in d.labels().iter().enumerate() {
        by_class[l.index()].push(i);
    }

    // Largest-remainder apportionment of `target` over the classes.
    let exact: Vec<f64> = by_class
        .iter()
        .map(|c| cfg.train_fraction * c.len() as f64)
        .collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut fixed = vec![false; N_CLASSES];
    for k in 0..N_CLASSES {
        if by_class[k].len() == 1 {
            quota[k] = 1;
            fixed[k] = true;
            warnings.push(format!(
                "class {} has a single row; it is assigned to the training set",
                TurnoverClass::ALL[k]
            ));
        }
    }
    let frac = |k: usize| exact[k] - exact[k].floor();
    let assigned: usize = quota.iter().sum();
    if assigned < target {
        let mut order: Vec<usize> = (0..N_CLASSES).filter(|&k| !fixed[k]).collect();
        order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
        let mut need = target - assigned;
        for &k in order.iter().cycle().take(order.len() * 2) {
            if need == 0 {
                break;
            }
            if quota[k] < by_class[k].len() {
                quota[k] += 1;
                need -= 1;
            }
        }
    } else if assigned > target {
        let mut order: Vec<usize> = (0..N_CLASSES).filter(|&k| !fixed[k]).collect();
        order.sort_by(|&a, &b| frac(a).total_cmp(&frac(b)).then(b.cmp(&a)));
        let mut excess = assigned - target;
        for &k in &order {
            if excess == 0 {
                break;
            }
            if quota[k] > 0 {
                quota[k] -= 1;
                excess -= 1;
            }
        }
    }

    let mut rng = seed::rng(cfg.seed);
    let mut train = Vec::with_capacity(target);
    for (k, rows) in by_class.iter_mut().enumerate() {
        rows.shuffle(&mut rng);
        train.extend_from_slice(&rows[..quota[k].min(rows.len())]);
    }
    train
}

/// Writes a dataset as CSV: one column per feature, then `label`.
pub fn write_dataset_csv<W: Write>(d: &LabeledDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = d.feature_names().iter().map(String::as_str).collect();
    header.push("label");
    w.write_record(&header)?;
    for i in 0..d.n_rows() {
        let mut rec: Vec<String> = d.row(i).iter().map(f64::to_string).collect();
        rec.push(d.label(i).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_csv<R: Read>(input: R) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new().from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.last().map(String::as_str) != Some("label") {
        return Err(Error::Schema(
            "dataset CSV must end with a label column".into(),
        ));
    }
    let feature_names = header[..header.len() - 1].to_vec();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (n, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = n + 1;
        if rec.len() != header.len() {
            return Err(Error::Parse {
                row,
                message: format!("expected {} cells, found {}", header.len(), rec.len()),
            });
        }
        for cell in rec.iter().take(feature_names.len()) {
            values.push(cell.parse::<f64>().map_err(|e| Error::Parse {
                row,
                message: format!("{cell:?}: {e}"),
            })?);
        }
        labels.push(rec[feature_names.len()].parse::<TurnoverClass>()?);
    }
    LabeledDataset::from_flat(feature_names, values, labels)
}

/// One-line JSON descriptor stored next to an encoded dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub feature_names: Vec<String>,
    pub bins: TurnoverBins,
    pub companies: Vec<String>,
    pub split_seed: u64,
}

impl DatasetSidecar {
    pub fn to_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)? + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    const HEADER: &str = "Date,Open Price,High Price,Low Price,Close Price,WAP,No.of Shares,No. of Trades,Total Turnover,Deliverable Quantity,Spread High-Low,Spread Close-Open,Company";

    fn record(company: &str, turnover: f64) -> StockRecord {
        StockRecord {
            date: NaiveDate::from_ymd_opt(2012, 5, 17).unwrap(),
            company: company.into(),
            open_price: 100.0,
            high_price: 110.0,
            low_price: 95.0,
            close_price: 105.0,
            wap: 102.5,
            no_of_shares: 5000.0,
            no_of_trades: 300.0,
            deliverable_quantity: 2500.0,
            spread_high_low: 15.0,
            spread_close_open: 5.0,
            total_turnover: turnover,
        }
    }

    fn labeled(counts: [usize; N_CLASSES]) -> LabeledDataset {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (k, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                rows.push(vec![rows.len() as f64]);
                labels.push(TurnoverClass::ALL[k]);
            }
        }
        LabeledDataset::new(vec!["x".into()], rows, labels).unwrap()
    }

    #[test]
    fn parses_exchange_header() {
        let csv = format!(
            "{HEADER}\n1-January-2010,1,2,0.5,1.5,1.2,\"1,000\",10,1200,500,1.5,0.5,Infosys\n2010-01-04,1,2,0.5,1.5,1.2,1000,10,1200,500,1.5,0.5,HDFC\n"
        );
        let t = parse_csv(csv.as_bytes(), &Column::ALL).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.warnings.is_empty());
        let recs = to_records(&t).unwrap();
        assert_eq!(recs[0].no_of_shares, 1000.0);
        assert_eq!(recs[0].date, NaiveDate::from_ymd_opt(2010, 1, 1).unwrap());
        assert_eq!(recs[1].company, "HDFC");
    }

    #[test]
    fn missing_required_column() {
        let header = HEADER.replace(",WAP", "");
        let err = parse_csv(format!("{header}\n").as_bytes(), &Column::ALL).unwrap_err();
        assert_eq!(err.to_string(), "schema error: missing column WAP");
    }

    #[test]
    fn wrong_arity_reports_row() {
        let csv = format!(
            "{HEADER}\n2010-01-04,1,2,0.5,1.5,1.2,1000,10,1200,500,1.5,0.5,HDFC\n2010-01-05,1,2,0.5,1.5,1.2,1000,10,1200,500,1.5,0.5\n"
        );
        match parse_csv(csv.as_bytes(), &Column::ALL) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn extra_columns_are_flagged() {
        let csv = format!("{HEADER},% Deli. Qty to Traded Qty\n");
        let t = parse_csv(csv.as_bytes(), &Column::ALL).unwrap();
        assert_eq!(t.warnings.len(), 1);
        assert_eq!(t.header.len(), 14);
    }

    #[test]
    fn header_matching_is_loose() {
        let csv = "date,OPEN PRICE,high_price,Low  Price,close price,wap,no of shares,No of Trades,total turnover,deliverable quantity,spread high low,spread close open,company\n";
        assert!(parse_csv(csv.as_bytes(), &Column::ALL).is_ok());
    }

    #[test]
    fn missing_markers_and_drop() {
        let mut csv = format!("{HEADER}\n");
        for i in 0..10 {
            let shares = match i {
                2 => "",
                5 => "NA",
                7 => "-",
                _ => "1000",
            };
            csv.push_str(&format!(
                "2010-01-04,1,2,0.5,1.5,1.2,{shares},10,1200,500,1.5,0.5,HDFC\n"
            ));
        }
        let t = parse_csv(csv.as_bytes(), &Column::ALL).unwrap();
        let (clean, dropped) = drop_missing(t.clone());
        assert_eq!((clean.len(), dropped), (7, 3));
        let (again, none) = drop_missing(clean.clone());
        assert_eq!((again, none), (clean, 0));

        let empty = parse_csv(format!("{HEADER}\n").as_bytes(), &Column::ALL).unwrap();
        let (e, d) = drop_missing(empty);
        assert_eq!((e.len(), d), (0, 0));
    }

    #[test]
    fn one_hot_columns() {
        let recs: Vec<_> = ["Infosys", "Sintex", "HDFC", "Apollo"]
            .iter()
            .map(|c| record(c, 58_320.0))
            .collect();
        let d = encode_features(&recs, &TurnoverBins::default()).unwrap();
        assert_eq!(d.n_features(), 14);
        assert!(d.labels().iter().all(|&l| l == TurnoverClass::A));
        for i in 0..d.n_rows() {
            let ones = d.row(i)[10..].iter().filter(|&&v| v == 1.0).count();
            assert_eq!(ones, 1);
        }
        assert_eq!(d.feature_names()[10], "company=Apollo");

        let single = encode_features(
            &[record("HDFC", 1e8), record("HDFC", 2e6)],
            &TurnoverBins::default(),
        )
        .unwrap();
        assert_eq!(single.n_features(), 11);
        assert_eq!(single.column(10), vec![1.0, 1.0]);
        assert_eq!(single.labels(), &[TurnoverClass::C, TurnoverClass::A]);
    }

    #[test]
    fn encode_rejects_empty_and_invalid() {
        assert!(encode_features(&[], &TurnoverBins::default()).is_err());
        let mut bad = record("HDFC", 1e6);
        bad.deliverable_quantity = 1e9;
        assert!(encode_features(&[bad], &TurnoverBins::default()).is_err());
    }

    #[test]
    fn exclusions_are_configurable() {
        let recs = vec![record("HDFC", 1e6)];
        let enc = FeatureEncoder::fit(&recs, &["wap".to_string()]).unwrap();
        assert!(enc.feature_names().contains(&"total_turnover".to_string()));
        assert!(enc.feature_names().contains(&"date".to_string()));
        assert!(!enc.feature_names().contains(&"wap".to_string()));
        let enc = FeatureEncoder::fit(&recs, &["company".to_string()]).unwrap();
        assert!(enc
            .feature_names()
            .iter()
            .all(|n| !n.starts_with(COMPANY_PREFIX)));
        assert!(FeatureEncoder::fit(&recs, &["volume".to_string()]).is_err());
        let enc = FeatureEncoder::fit(&recs, &[]).unwrap();
        let row = enc.encode(&recs[0]).unwrap();
        assert_eq!(
            row[enc
                .feature_names()
                .iter()
                .position(|n| n == "date")
                .unwrap()],
            15_477.0
        );
    }

    #[test]
    fn unknown_company_lists_vocabulary() {
        let enc = FeatureEncoder::fit(&[record("HDFC", 1e6)], &[]).unwrap();
        match enc.encode(&record("Wipro", 1e6)) {
            Err(Error::UnknownCompany { name, known }) => {
                assert_eq!(name, "Wipro");
                assert_eq!(known, vec!["HDFC".to_string()]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn split_sizes() {
        let d = labeled([50, 50, 0, 0, 0]);
        let s = split_train_validation(&d, &SplitConfig::default()).unwrap();
        assert_eq!((s.train.n_rows(), s.valid.n_rows()), (60, 40));
    }

    #[test]
    fn split_is_deterministic() {
        let d = labeled([10, 0, 0, 0, 0]);
        let cfg = SplitConfig {
            seed: 7,
            ..SplitConfig::default()
        };
        let a = split_train_validation(&d, &cfg).unwrap();
        let b = split_train_validation(&d, &cfg).unwrap();
        assert_eq!(a.train_rows, b.train_rows);
        assert_eq!(a.train.n_rows(), 6);
    }

    #[test]
    fn stratified_shares_match_proportional_count() {
        let d = labeled([20, 30, 0, 0, 0]);
        let s = split_train_validation(
            &d,
            &SplitConfig {
                seed: 3,
                ..SplitConfig::default()
            },
        )
        .unwrap();
        let h = s.train.class_histogram();
        // 0.6 × 20 = 12 and 0.6 × 30 = 18 exactly.
        assert_eq!((h[0], h[1]), (12, 18));
    }

    #[test]
    fn singleton_class_goes_to_train() {
        let d = labeled([1, 9, 5, 0, 0]);
        let s = split_train_validation(&d, &SplitConfig::default()).unwrap();
        assert_eq!(s.train.class_histogram()[0], 1);
        assert_eq!(s.warnings.len(), 1);
        assert_eq!(s.train.n_rows(), 9);
    }

    #[test]
    fn sequential_split_cuts_sorted_labels() {
        let d = labeled([4, 4, 2, 0, 0]);
        let s = split_train_validation(
            &d,
            &SplitConfig {
                strategy: SplitStrategy::Sequential,
                ..SplitConfig::default()
            },
        )
        .unwrap();
        assert_eq!(s.train.class_histogram(), [4, 2, 0, 0, 0]);
        assert_eq!(s.valid.class_histogram(), [0, 2, 2, 0, 0]);
    }

    #[test]
    fn split_rejects_bad_inputs() {
        assert!(
            split_train_validation(&labeled([2, 2, 0, 0, 0]), &SplitConfig::default()).is_err()
        );
        let cfg = SplitConfig {
            train_fraction: 1.0,
            ..SplitConfig::default()
        };
        assert!(split_train_validation(&labeled([5, 5, 0, 0, 0]), &cfg).is_err());
    }

    #[test]
    fn different_seeds_give_different_splits() {
        let d = labeled([10, 10, 0, 0, 0]);
        let mut differ = 0;
        for s in 0..100u64 {
            let a = split_train_validation(
                &d,
                &SplitConfig {
                    seed: 2 * s,
                    ..SplitConfig::default()
                },
            )
            .unwrap();
            let b = split_train_validation(
                &d,
                &SplitConfig {
                    seed: 2 * s + 1,
                    ..SplitConfig::default()
                },
            )
            .unwrap();
            if a.train_rows != b.train_rows {
                differ += 1;
            }
        }
        assert!(differ >= 99, "only {differ}/100 seed pairs differ");
    }

    #[test]
    fn dataset_csv_round_trip() {
        let d = LabeledDataset::new(
            vec!["a".into(), "company=Apollo, Ltd".into()],
            vec![vec![0.1, 1.0], vec![1e10, 0.0]],
            vec![TurnoverClass::D, TurnoverClass::E],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&d, &mut buf).unwrap();
        assert_eq!(read_dataset_csv(buf.as_slice()).unwrap(), d);
    }

    proptest! {
        #[test]
        fn split_partitions_rows(
            counts in proptest::array::uniform5(0usize..25),
            frac in 0.05f64..0.95,
            seed in any::<u64>(),
            sequential in any::<bool>(),
        ) {
            prop_assume!(counts.iter().sum::<usize>() >= MIN_SPLIT_ROWS);
            let d = labeled(counts);
            let cfg = SplitConfig {
                train_fraction: frac,
                seed,
                strategy: if sequential { SplitStrategy::Sequential } else { SplitStrategy::StratifiedRandom },
            };
            let s = split_train_validation(&d, &cfg).unwrap();
            let mut all: Vec<usize> = s.train_rows.iter().chain(&s.valid_rows).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..d.n_rows()).collect::<Vec<_>>());
            let singletons = counts.iter().filter(|&&c| c == 1).count();
            let target = (frac * d.n_rows() as f64).round() as usize;
            if singletons == 0 {
                prop_assert_eq!(s.train.n_rows(), target);
            }
            if !sequential && singletons == 0 {
                let h = s.train.class_histogram();
                for k in 0..N_CLASSES {
                    prop_assert!((h[k] as f64 - frac * counts[k] as f64).abs() <= 1.0 + 1e-9);
                }
            }
        }
    }
}
