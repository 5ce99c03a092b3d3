//! Share-turnover classification toolkit.
//!
//! The pipeline ingests daily stock-share records, discretizes total turnover
//! into five ordinal classes (A–E), selects features with Boruta on top of a
//! from-scratch random forest, trains five classifiers and produces
//! comparative accuracy reports plus the data behind the summary figures.

pub mod baselines;
pub mod boruta;
pub mod data_model;
pub mod error;
pub mod evaluation;
pub mod forest;
pub mod ingestion;
pub mod model;
pub mod pipeline;
pub mod seed;

pub use data_model::{LabeledDataset, StockRecord, TurnoverBins, TurnoverClass, N_CLASSES};
pub use error::{Error, Result};
