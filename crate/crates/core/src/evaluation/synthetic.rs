//! Seeded synthetic datasets with known informative and noise features.
//!
//! Each row draws a class `c` uniformly and a latent position
//! `u = c + 0.1 + 0.8·U(0,1)`, so neighbouring classes are separated by a gap
//! of 0.2 on the latent axis. Informative feature `j` is
//! `exp(±a_j · (u + noise_level·ε_j))` with `ε_j ~ N(0,1)` drawn per feature,
//! `a_j ∈ {1, 1.5, 2, 2.5}` cycling and the sign alternating. The transforms
//! are monotone, so trees see the latent order directly, while the strong
//! curvature leaves linear models resolving only one end of the class range
//! per feature. Noise features are independent log-normal draws.
//!
//! The record view carries the same labels: total turnover is placed inside
//! the class's turnover interval at the row's latent position, and prices,
//! spreads and counts are generated around a per-company price level so that
//! every record invariant holds.

use chrono::{Days, NaiveDate};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data_model::{LabeledDataset, StockRecord, TurnoverBins, TurnoverClass, N_CLASSES};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_rows: usize,
    pub n_informative: usize,
    pub n_noise: usize,
    pub class_count: usize,
    pub noise_level: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_rows: 2000,
            n_informative: 10,
            n_noise: 10,
            class_count: N_CLASSES,
            noise_level: 0.1,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn check(&self) -> Result<()> {
        if self.n_rows == 0 {
            return Err(Error::domain("n_rows must be at least 1"));
        }
        if self.n_informative == 0 {
            return Err(Error::domain("n_informative must be at least 1"));
        }
        if self.class_count != N_CLASSES {
            return Err(Error::domain(format!("class_count must be {N_CLASSES}")));
        }
        if !(0.0..1.0).contains(&self.noise_level) {
            return Err(Error::domain("noise_level must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn informative_name(j: usize) -> String {
        format!("inf_{j:02}")
    }

    pub fn noise_name(j: usize) -> String {
        format!("noise_{j:02}")
    }
}

const COMPANIES: [(&str, f64); 4] = [
    ("Apollo", 300.0),
    ("HDFC", 1200.0),
    ("Infosys", 2500.0),
    ("Sintex", 80.0),
];
const FIRST_DAY: (i32, u32, u32) = (2005, 1, 1);
const N_DAYS: u64 = 4017;

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn record(rng: &mut ChaCha8Rng, bins: &TurnoverBins, class: usize, position: f64) -> StockRecord {
    let (company, level) = COMPANIES[rng.gen_range(0..COMPANIES.len())];
    let date = NaiveDate::from_ymd_opt(FIRST_DAY.0, FIRST_DAY.1, FIRST_DAY.2)
        .and_then(|d| d.checked_add_days(Days::new(rng.gen_range(0..N_DAYS))))
        .expect("date within range");

    let (lo, hi) = bins.bounds()[class];
    let (lo, hi) = ((lo * 1.01).ln(), (hi / 1.01).ln());
    let turnover = (lo + position * (hi - lo)).exp().round();
    let price_level = level * (0.3 * rng.sample::<f64, _>(StandardNormal)).exp();
    let shares = (turnover / price_level).round().max(1.0);
    let wap = round2(turnover / shares);

    let low = ((wap * (1.0 - rng.gen_range(0.0..0.05))) * 100.0).floor() / 100.0;
    let high = ((wap * (1.0 + rng.gen_range(0.0..0.05))) * 100.0).ceil() / 100.0;
    let open = round2(rng.gen_range(low..=high)).clamp(low, high);
    let close = round2(rng.gen_range(low..=high)).clamp(low, high);
    let trades = (shares / rng.gen_range(50.0..500.0)).round().max(1.0);
    let deliverable = (shares * rng.gen_range(0.2..0.8)).floor();

    StockRecord {
        date,
        company: company.to_string(),
        open_price: open,
        high_price: high,
        low_price: low,
        close_price: close,
        wap,
        no_of_shares: shares,
        no_of_trades: trades,
        deliverable_quantity: deliverable,
        spread_high_low: high - low,
        spread_close_open: close - open,
        total_turnover: turnover,
    }
}

/// Deterministic in `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Vec<StockRecord>, LabeledDataset)> {
    spec.check()?;
    let bins = TurnoverBins::default();
    let mut rng = seed::rng(spec.seed);
    let f = spec.n_informative + spec.n_noise;
    let mut values = Vec::with_capacity(spec.n_rows * f);
    let mut labels = Vec::with_capacity(spec.n_rows);
    let mut records = Vec::with_capacity(spec.n_rows);

    for _ in 0..spec.n_rows {
        let class = rng.gen_range(0..N_CLASSES);
        let position: f64 = rng.gen();
        let u = class as f64 + 0.1 + 0.8 * position;
        for j in 0..spec.n_informative {
            let eps: f64 = rng.sample(StandardNormal);
            let a = 1.0 + 0.5 * (j % 4) as f64;
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            values.push((sign * a * (u + spec.noise_level * eps)).exp());
        }
        for _ in 0..spec.n_noise {
            values.push(rng.sample::<f64, _>(StandardNormal).exp());
        }
        labels.push(TurnoverClass::ALL[class]);
        records.push(record(&mut rng, &bins, class, position));
    }

    let names = (0..spec.n_informative)
        .map(SyntheticSpec::informative_name)
        .chain((0..spec.n_noise).map(SyntheticSpec::noise_name))
        .collect();
    let d = LabeledDataset::from_flat(names, values, labels)?;
    Ok((records, d))
}
