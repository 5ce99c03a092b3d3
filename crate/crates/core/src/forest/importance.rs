use log::debug;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ensemble::ForestModel;
use crate::data_model::LabeledDataset;
use crate::error::{Error, Result};
use crate::seed;

/// Per-feature permutation importances, one entry per tree, and their z-scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceScores {
    pub feature_names: Vec<String>,
    /// `raw[j][t]`: accuracy drop of tree `t` when feature `j` is permuted.
    pub raw: Vec<Vec<f64>>,
    pub z: Vec<f64>,
}

/// `mean / (sd / sqrt(n))` with the sample standard deviation; 0 when the
/// spread is zero or there are fewer than two samples.
pub fn z_scores(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if sd == 0.0 || !sd.is_finite() {
        return 0.0;
    }
    mean / (sd / (n as f64).sqrt())
}

/// Out-of-bag permutation importance of every feature.
///
/// For tree `t` and feature `j` the importance is the tree's OOB accuracy
/// minus its OOB accuracy after shuffling column `j` among the OOB rows. The
/// shuffle for `(t, j)` is drawn from its own seed derived from `seed`. Trees
/// with fewer than two OOB rows contribute 0.
pub fn permutation_importance(
    m: &ForestModel,
    d: &LabeledDataset,
    seed: u64,
) -> Result<ImportanceScores> {
    if m.oob_rows.len() != m.trees.len() {
        return Err(Error::domain(
            "forest carries no out-of-bag bookkeeping (was it trained in this session with bootstrap?)",
        ));
    }
    if d.feature_names() != m.feature_names.as_slice() {
        return Err(Error::domain(
            "dataset features differ from the forest's training features",
        ));
    }
    let f = d.n_features();
    let n_trees = m.trees.len();

    let per_tree: Vec<Vec<f64>> = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let tree = &m.trees[t];
            let oob = &m.oob_rows[t];
            if oob.len() < 2 {
                debug!(
                    "tree {t} has {} out-of-bag rows; importance set to 0",
                    oob.len()
                );
                return vec![0.0; f];
            }
            if oob.iter().any(|&i| i as usize >= d.n_rows()) {
                return vec![0.0; f];
            }
            let total = oob.len() as f64;
            let base = oob
                .iter()
                .filter(|&&i| tree.predict_unchecked(d.row(i as usize)) == d.label(i as usize))
                .count() as f64
                / total;
            let mut column = Vec::with_capacity(oob.len());
            (0..f)
                .map(|j| {
                    if !tree.uses_feature(j) {
                        return 0.0;
                    }
                    column.clear();
                    column.extend(oob.iter().map(|&i| d.value(i as usize, j)));
                    let mut rng =
                        seed::rng(seed::derive(seed, seed::TAG_PERMUTE, (t * f + j) as u64));
                    column.shuffle(&mut rng);
                    let permuted = oob
                        .iter()
                        .zip(&column)
                        .filter(|(&i, &v)| {
                            let i = i as usize;
                            tree.predict_with_override(d.row(i), j, v) == d.label(i)
                        })
                        .count() as f64
                        / total;
                    base - permuted
                })
                .collect()
        })
        .collect();

    let raw: Vec<Vec<f64>> = (0..f)
        .map(|j| per_tree.iter().map(|row| row[j]).collect())
        .collect();
    let z = raw.iter().map(|r| z_scores(r)).collect();
    Ok(ImportanceScores {
        feature_names: d.feature_names().to_vec(),
        raw,
        z,
    })
}
