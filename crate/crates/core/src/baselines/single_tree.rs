//! Single CART trees in two configurations: a plain one and one gated by a
//! chi-squared significance test at every split.

use serde::{Deserialize, Serialize};

use crate::data_model::LabeledDataset;
use crate::error::{Error, Result};
use crate::forest::{train_tree, DecisionTree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeVariant {
    Partylike,
    Rpartlike,
}

impl TreeVariant {
    pub const GATE_LEVEL: f64 = 0.05;
    pub const MIN_SAMPLES_LEAF: usize = 5;

    pub fn params(self, n_features: usize) -> TreeParams {
        TreeParams {
            max_depth: None,
            min_samples_split: 2 * Self::MIN_SAMPLES_LEAF,
            min_samples_leaf: Self::MIN_SAMPLES_LEAF,
            mtry: Some(n_features),
            significance_gate: match self {
                TreeVariant::Partylike => Some(Self::GATE_LEVEL),
                TreeVariant::Rpartlike => None,
            },
        }
    }
}

/// All rows, all features at every node; no randomness is involved.
pub fn train_single_tree(d: &LabeledDataset, variant: TreeVariant) -> Result<DecisionTree> {
    if d.is_empty() {
        return Err(Error::domain("cannot train a tree on an empty dataset"));
    }
    let rows: Vec<usize> = (0..d.n_rows()).collect();
    train_tree(d, &rows, &variant.params(d.n_features()), 0)
}
