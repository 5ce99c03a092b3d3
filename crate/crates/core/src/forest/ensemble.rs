use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, ClassCounts, DecisionTree, TreeParams};
use crate::data_model::{LabeledDataset, TurnoverClass, N_CLASSES};
use crate::error::{Error, Result};
use crate::seed;

pub const FOREST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestOptions {
    /// Draw a bootstrap sample per tree. Without it every tree sees all rows
    /// and nothing is out of bag.
    pub bootstrap: bool,
    /// Worker threads for training; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

impl Default for ForestOptions {
    fn default() -> Self {
        ForestOptions {
            bootstrap: true,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub schema_version: u32,
    pub params: TreeParams,
    pub n_trees: usize,
    pub seed: u64,
    pub bootstrap: bool,
    pub feature_names: Vec<String>,
    pub per_tree_seeds: Vec<u64>,
    pub trees: Vec<DecisionTree>,
    /// Out-of-bag row indices per tree (training-time only).
    #[serde(skip)]
    pub(crate) oob_rows: Vec<Vec<u32>>,
    /// Out-of-bag vote histogram per training row (training-time only).
    #[serde(skip)]
    pub oob_votes: Option<Vec<ClassCounts>>,
}

impl ForestModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn oob_rows(&self) -> &[Vec<u32>] {
        &self.oob_rows
    }

    /// Fraction of rows with at least one out-of-bag vote whose OOB majority
    /// matches the label.
    pub fn oob_accuracy(&self, d: &LabeledDataset) -> Option<f64> {
        let votes = self.oob_votes.as_ref()?;
        let (mut seen, mut correct) = (0usize, 0usize);
        for (i, v) in votes.iter().enumerate() {
            if v.iter().sum::<u32>() == 0 {
                continue;
            }
            seen += 1;
            if TurnoverClass::argmax(v) == d.label(i) {
                correct += 1;
            }
        }
        (seen > 0).then(|| correct as f64 / seen as f64)
    }

    pub fn predict(&self, row: &[f64]) -> Result<TurnoverClass> {
        predict_forest(self, row).map(|(c, _)| c)
    }
}

/// Trains `n_trees` bagged trees with default options.
pub fn train_forest(
    d: &LabeledDataset,
    n_trees: usize,
    params: &TreeParams,
    seed: u64,
) -> Result<ForestModel> {
    train_forest_with(d, n_trees, params, seed, &ForestOptions::default())
}

/// Trains a forest. Tree `t` uses the seed `derive(seed, tree, t)` for both
/// its bootstrap draw and its node-level feature sampling, so the model does
/// not depend on the number of workers.
pub fn train_forest_with(
    d: &LabeledDataset,
    n_trees: usize,
    params: &TreeParams,
    seed: u64,
    opts: &ForestOptions,
) -> Result<ForestModel> {
    if d.is_empty() {
        return Err(Error::domain("cannot train a forest on an empty dataset"));
    }
    if n_trees == 0 {
        return Err(Error::domain("a forest needs at least one tree"));
    }
    params.check()?;
    params.resolve_mtry(d.n_features())?;

    let per_tree_seeds: Vec<u64> = (0..n_trees as u64)
        .map(|t| seed::derive(seed, seed::TAG_TREE, t))
        .collect();
    let n = d.n_rows();
    let fit_one = |&tree_seed: &u64| -> Result<(DecisionTree, Vec<u32>)> {
        let mut rng = seed::rng(tree_seed);
        let rows: Vec<usize> = if opts.bootstrap {
            (0..n).map(|_| rng.gen_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let mut in_bag = vec![false; n];
        for &i in &rows {
            in_bag[i] = true;
        }
        let oob = (0..n as u32).filter(|&i| !in_bag[i as usize]).collect();
        Ok((grow_tree(d, rows, params, &mut rng)?, oob))
    };

    let fitted: Vec<(DecisionTree, Vec<u32>)> = match opts.workers {
        Some(1) => per_tree_seeds.iter().map(fit_one).collect::<Result<_>>()?,
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::domain(format!("cannot start {w} workers: {e}")))?
            .install(|| {
                per_tree_seeds
                    .par_iter()
                    .map(fit_one)
                    .collect::<Result<_>>()
            })?,
        None => per_tree_seeds
            .par_iter()
            .map(fit_one)
            .collect::<Result<_>>()?,
    };
    let (trees, oob_rows): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();

    let mut votes = vec![[0u32; N_CLASSES]; n];
    for (tree, oob) in trees.iter().zip(&oob_rows) {
        for &i in oob {
            let i = i as usize;
            votes[i][tree.predict_unchecked(d.row(i)).index()] += 1;
        }
    }

    Ok(ForestModel {
        schema_version: FOREST_SCHEMA_VERSION,
        params: params.clone(),
        n_trees,
        seed,
        bootstrap: opts.bootstrap,
        feature_names: d.feature_names().to_vec(),
        per_tree_seeds,
        trees,
        oob_rows,
        oob_votes: opts.bootstrap.then_some(votes),
    })
}

/// Majority vote over the trees, ties toward the lower class.
pub fn predict_forest(m: &ForestModel, row: &[f64]) -> Result<(TurnoverClass, ClassCounts)> {
    if row.len() != m.n_features() {
        return Err(Error::domain(format!(
            "row has {} values, forest expects {}",
            row.len(),
            m.n_features()
        )));
    }
    let mut hist = [0u32; N_CLASSES];
    for t in &m.trees {
        hist[t.predict_unchecked(row).index()] += 1;
    }
    Ok((TurnoverClass::argmax(&hist), hist))
}
