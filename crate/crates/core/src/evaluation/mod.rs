//! Confusion matrices, accuracy, the comparative model report, figure data
//! and the synthetic dataset generator.

mod figures;
mod synthetic;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data_model::{LabeledDataset, TurnoverClass, N_CLASSES};
use crate::error::{Error, Result};
use crate::model::TrainedModel;

pub use figures::{
    figure3_svg, figure4_svg, shares_sum_by_class, write_figure3_csv, write_figure4_csv,
    yearly_average_turnover, YearlyMean,
};
pub use synthetic::{generate_synthetic, SyntheticSpec};

/// Rows are true classes, columns predicted classes, both in A..E order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; N_CLASSES]; N_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..N_CLASSES).map(|k| self.counts[k][k]).sum()
    }

    /// Header row and column carry the class symbols.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(TurnoverClass::ALL.iter().map(|c| c.symbol().to_string()));
        out.write_record(&header)?;
        for (k, row) in self.counts.iter().enumerate() {
            let mut rec = vec![TurnoverClass::ALL[k].symbol().to_string()];
            rec.extend(row.iter().map(u64::to_string));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn confusion_matrix(
    truth: &[TurnoverClass],
    pred: &[TurnoverClass],
) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::domain(format!(
            "truth has {} labels but predictions have {}",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::domain(
            "cannot build a confusion matrix from zero labels",
        ));
    }
    let mut c = ConfusionMatrix::default();
    for (t, p) in truth.iter().zip(pred) {
        c.counts[t.index()][p.index()] += 1;
    }
    Ok(c)
}

/// Correctly classified observations over all observations, times 100.
pub fn accuracy(c: &ConfusionMatrix) -> Result<f64> {
    let total = c.total();
    if total == 0 {
        return Err(Error::domain("accuracy of an empty confusion matrix"));
    }
    Ok(c.trace() as f64 / total as f64 * 100.0)
}

/// Shape of the data a report was computed on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    pub train_rows: usize,
    pub valid_rows: usize,
    pub valid_class_histogram: [usize; N_CLASSES],
    pub split_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub name: String,
    pub accuracy_percent: f64,
    pub confusion: ConfusionMatrix,
    pub train_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparativeReport {
    /// Descending accuracy; equal accuracies ordered by name.
    pub rows: Vec<ModelResult>,
    pub fingerprint: DatasetFingerprint,
}

pub struct NamedModel<'a> {
    pub name: &'a str,
    pub model: &'a TrainedModel,
    pub train_seconds: f64,
}

pub fn comparative_report(
    models: &[NamedModel<'_>],
    valid: &LabeledDataset,
    train_rows: usize,
    split_seed: u64,
) -> Result<ComparativeReport> {
    let mut rows = Vec::with_capacity(models.len());
    for m in models {
        let pred = m.model.predict_dataset(m.name, valid)?;
        let confusion = confusion_matrix(valid.labels(), &pred)?;
        rows.push(ModelResult {
            name: m.name.to_string(),
            accuracy_percent: accuracy(&confusion)?,
            confusion,
            train_seconds: m.train_seconds,
        });
    }
    rows.sort_by(|a, b| {
        b.accuracy_percent
            .total_cmp(&a.accuracy_percent)
            .then_with(|| a.name.cmp(&b.name))
    });
    Ok(ComparativeReport {
        rows,
        fingerprint: DatasetFingerprint {
            train_rows,
            valid_rows: valid.n_rows(),
            valid_class_histogram: valid.class_histogram(),
            split_seed,
        },
    })
}

impl ComparativeReport {
    /// `model,accuracy_percent,train_seconds`, accuracy to 2 decimals.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["model", "accuracy_percent", "train_seconds"])?;
        for r in &self.rows {
            out.write_record([
                r.name.clone(),
                format!("{:.2}", r.accuracy_percent),
                format!("{:.3}", r.train_seconds),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ModelResult> {
        self.rows.iter().find(|r| r.name == name)
    }
}
