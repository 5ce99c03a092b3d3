//! CART classification tree with Gini splits on midpoint thresholds.

use std::cmp::Ordering;

use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data_model::{LabeledDataset, TurnoverClass, N_CLASSES};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    /// `None` grows until another stopping rule fires.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Features sampled per node; `None` means `floor(sqrt(F))`.
    pub mtry: Option<usize>,
    /// When set, each node first tests every candidate feature for
    /// association with the label ([`association_p`]). The node becomes a
    /// leaf unless the smallest Bonferroni-adjusted p-value is below this
    /// level; otherwise only the most associated feature is split on.
    pub significance_gate: Option<f64>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            mtry: None,
            significance_gate: None,
        }
    }
}

impl TreeParams {
    pub fn resolve_mtry(&self, n_features: usize) -> Result<usize> {
        if n_features == 0 {
            return Err(Error::domain("cannot grow a tree without features"));
        }
        match self.mtry {
            None => Ok(((n_features as f64).sqrt().floor() as usize).max(1)),
            Some(m) if (1..=n_features).contains(&m) => Ok(m),
            Some(m) => Err(Error::domain(format!(
                "mtry must lie in 1..={n_features}, got {m}"
            ))),
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.min_samples_split == 0 || self.min_samples_leaf == 0 {
            return Err(Error::domain(
                "min_samples_split and min_samples_leaf must be positive",
            ));
        }
        if let Some(g) = self.significance_gate {
            if !(g > 0.0 && g < 1.0) {
                return Err(Error::domain(format!(
                    "significance gate must lie in (0, 1), got {g}"
                )));
            }
        }
        Ok(())
    }
}

pub type ClassCounts = [u32; N_CLASSES];

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    /// Rows with `row[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: ClassCounts,
        predicted: TurnoverClass,
    },
}

/// A trained tree. Node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "FlatTree", try_from = "FlatTree")]
pub struct DecisionTree {
    nodes: Vec<TreeNode>,
    n_features: usize,
}

/// Column-per-field serialized form of a tree. Leaves have `feature = -1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FlatTree {
    n_features: usize,
    feature: Vec<i64>,
    threshold: Vec<f64>,
    left: Vec<i64>,
    right: Vec<i64>,
    counts: Vec<ClassCounts>,
}

impl From<DecisionTree> for FlatTree {
    fn from(t: DecisionTree) -> Self {
        let n = t.nodes.len();
        let mut flat = FlatTree {
            n_features: t.n_features,
            feature: Vec::with_capacity(n),
            threshold: Vec::with_capacity(n),
            left: Vec::with_capacity(n),
            right: Vec::with_capacity(n),
            counts: Vec::with_capacity(n),
        };
        for node in t.nodes {
            match node {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    flat.feature.push(feature as i64);
                    flat.threshold.push(threshold);
                    flat.left.push(left as i64);
                    flat.right.push(right as i64);
                    flat.counts.push([0; N_CLASSES]);
                }
                TreeNode::Leaf { counts, .. } => {
                    flat.feature.push(-1);
                    flat.threshold.push(0.0);
                    flat.left.push(-1);
                    flat.right.push(-1);
                    flat.counts.push(counts);
                }
            }
        }
        flat
    }
}

impl TryFrom<FlatTree> for DecisionTree {
    type Error = String;

    fn try_from(f: FlatTree) -> std::result::Result<Self, String> {
        let n = f.feature.len();
        if [
            f.threshold.len(),
            f.left.len(),
            f.right.len(),
            f.counts.len(),
        ] != [n; 4]
            || n == 0
        {
            return Err("tree arrays have inconsistent lengths".into());
        }
        let child = |c: i64, i: usize| -> std::result::Result<usize, String> {
            if c > i as i64 && (c as usize) < n {
                Ok(c as usize)
            } else {
                Err(format!("node {i} has invalid child {c}"))
            }
        };
        let mut nodes = Vec::with_capacity(n);
        for i in 0..n {
            if f.feature[i] < 0 {
                nodes.push(TreeNode::Leaf {
                    counts: f.counts[i],
                    predicted: TurnoverClass::argmax(&f.counts[i]),
                });
            } else {
                let feature = f.feature[i] as usize;
                if feature >= f.n_features {
                    return Err(format!("node {i} splits on unknown feature {feature}"));
                }
                nodes.push(TreeNode::Split {
                    feature,
                    threshold: f.threshold[i],
                    left: child(f.left[i], i)?,
                    right: child(f.right[i], i)?,
                });
            }
        }
        Ok(DecisionTree {
            nodes,
            n_features: f.n_features,
        })
    }
}

impl DecisionTree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.nodes[0], TreeNode::Leaf { .. })
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn root_feature(&self) -> Option<usize> {
        match self.nodes[0] {
            TreeNode::Split { feature, .. } => Some(feature),
            TreeNode::Leaf { .. } => None,
        }
    }

    pub fn uses_feature(&self, j: usize) -> bool {
        self.nodes
            .iter()
            .any(|n| matches!(n, TreeNode::Split { feature, .. } if *feature == j))
    }

    /// Leaf reached by `row`, with feature `over.0` read as `over.1` when given.
    #[inline]
    fn leaf(&self, row: &[f64], over: Option<(usize, f64)>) -> (&ClassCounts, TurnoverClass) {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let v = match over {
                        Some((j, v)) if j == *feature => v,
                        _ => row[*feature],
                    };
                    i = if v <= *threshold { *left } else { *right };
                }
                TreeNode::Leaf { counts, predicted } => return (counts, *predicted),
            }
        }
    }

    /// Prediction without an arity check.
    #[inline]
    pub fn predict_unchecked(&self, row: &[f64]) -> TurnoverClass {
        self.leaf(row, None).1
    }

    #[inline]
    pub(crate) fn predict_with_override(
        &self,
        row: &[f64],
        feature: usize,
        value: f64,
    ) -> TurnoverClass {
        self.leaf(row, Some((feature, value))).1
    }

    pub fn predict(&self, row: &[f64]) -> Result<TurnoverClass> {
        if row.len() != self.n_features {
            return Err(Error::domain(format!(
                "row has {} values, tree expects {}",
                row.len(),
                self.n_features
            )));
        }
        Ok(self.predict_unchecked(row))
    }

    pub fn leaf_counts(&self, row: &[f64]) -> Result<ClassCounts> {
        self.predict(row)?;
        Ok(*self.leaf(row, None).0)
    }
}

/// Gini impurity `1 − Σ p_k²` of a class histogram.
pub fn gini_impurity(counts: &[usize]) -> Result<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::domain("gini impurity of an empty node"));
    }
    let t = total as f64;
    Ok(1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Parent impurity minus the size-weighted child impurities.
    pub impurity_decrease: f64,
}

/// Exact split score `S_L/n_L + S_R/n_R` (with `S = Σ count²`) held as a
/// fraction. Larger score means lower weighted child impurity.
#[derive(Debug, Clone, Copy)]
struct Score {
    num: u128,
    den: u128,
}

impl Score {
    fn new(sq_left: u128, n_left: u128, sq_right: u128, n_right: u128) -> Self {
        Score {
            num: sq_left * n_right + sq_right * n_left,
            den: n_left * n_right,
        }
    }

    fn cmp(&self, other: &Score) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }

    fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn sum_sq(counts: &[u64; N_CLASSES]) -> u128 {
    counts.iter().map(|&c| (c as u128) * (c as u128)).sum()
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = (lo + hi) / 2.0;
    if m >= hi {
        lo
    } else {
        m
    }
}

/// Best weighted-Gini split of `rows` over `candidates`.
///
/// Thresholds are midpoints between consecutive distinct values. Ties prefer
/// the lower feature index, then the lower threshold. Returns `None` when no
/// split strictly reduces impurity.
pub fn best_split(d: &LabeledDataset, rows: &[usize], candidates: &[usize]) -> Option<Split> {
    best_split_constrained(d, rows, candidates, 1, &mut Vec::new()).map(|(s, _, _)| s)
}

/// As [`best_split`] with a minimum child size; also returns the child histograms.
fn best_split_constrained(
    d: &LabeledDataset,
    rows: &[usize],
    candidates: &[usize],
    min_leaf: usize,
    scratch: &mut Vec<(f64, u8)>,
) -> Option<(Split, [u64; N_CLASSES], [u64; N_CLASSES])> {
    let n = rows.len();
    if n < 2 * min_leaf.max(1) {
        return None;
    }
    let mut total = [0u64; N_CLASSES];
    for &i in rows {
        total[d.label(i).index()] += 1;
    }
    if total.iter().filter(|&&c| c > 0).count() < 2 {
        return None;
    }
    let parent = Score {
        num: sum_sq(&total),
        den: n as u128,
    };

    let mut order: Vec<usize> = candidates.to_vec();
    order.sort_unstable();
    order.dedup();

    let mut best: Option<(Score, usize, f64, [u64; N_CLASSES])> = None;
    for &j in &order {
        scratch.clear();
        scratch.extend(
            rows.iter()
                .map(|&i| (d.value(i, j), d.label(i).index() as u8)),
        );
        scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = [0u64; N_CLASSES];
        for pos in 0..n - 1 {
            left[scratch[pos].1 as usize] += 1;
            let n_left = pos + 1;
            if scratch[pos].0 == scratch[pos + 1].0 || n_left < min_leaf || n - n_left < min_leaf {
                continue;
            }
            let mut right = total;
            for k in 0..N_CLASSES {
                right[k] -= left[k];
            }
            let score = Score::new(
                sum_sq(&left),
                n_left as u128,
                sum_sq(&right),
                (n - n_left) as u128,
            );
            let better = match &best {
                None => true,
                Some((b, ..)) => score.cmp(b) == Ordering::Greater,
            };
            if better {
                best = Some((score, j, midpoint(scratch[pos].0, scratch[pos + 1].0), left));
            }
        }
    }

    let (score, feature, threshold, left) = best?;
    // Strict decrease: S_L/n_L + S_R/n_R > S/n.
    if score.cmp(&parent) != Ordering::Greater {
        return None;
    }
    let mut right = total;
    for k in 0..N_CLASSES {
        right[k] -= left[k];
    }
    let decrease = (score.as_f64() - parent.as_f64()) / n as f64;
    Some((
        Split {
            feature,
            threshold,
            impurity_decrease: decrease,
        },
        left,
        right,
    ))
}

/// Permutation-conditional association test between one feature and the
/// label over `rows`.
///
/// The statistic `(n-1)·SSB/SST` is the quadratic form of the linear
/// statistic `Σ x_i·e(y_i)` under its permutation covariance, asymptotically
/// chi-squared with one fewer degree of freedom than the number of classes
/// present. Returns 1 when the feature or the label is constant.
pub fn association_p(d: &LabeledDataset, rows: &[usize], feature: usize) -> f64 {
    let n = rows.len();
    let mut count = [0usize; N_CLASSES];
    let mut sum = [0.0f64; N_CLASSES];
    let mut total = 0.0;
    for &i in rows {
        let x = d.value(i, feature);
        let k = d.label(i).index();
        count[k] += 1;
        sum[k] += x;
        total += x;
    }
    let mean = total / n as f64;
    let sst: f64 = rows
        .iter()
        .map(|&i| (d.value(i, feature) - mean).powi(2))
        .sum();
    let present = count.iter().filter(|&&c| c > 0).count();
    if present < 2 || n < 2 || !(sst > 1e-12 * (1.0 + mean * mean) * n as f64) {
        return 1.0;
    }
    let ssb: f64 = (0..N_CLASSES)
        .filter(|&k| count[k] > 0)
        .map(|k| count[k] as f64 * (sum[k] / count[k] as f64 - mean).powi(2))
        .sum();
    let stat = (n - 1) as f64 * (ssb / sst).min(1.0);
    let dist = ChiSquared::new((present - 1) as f64).expect("positive degrees of freedom");
    dist.sf(stat)
}

struct Builder<'a> {
    d: &'a LabeledDataset,
    params: &'a TreeParams,
    mtry: usize,
    rng: &'a mut ChaCha8Rng,
    nodes: Vec<TreeNode>,
    scratch: Vec<(f64, u8)>,
}

impl Builder<'_> {
    fn leaf(&mut self, rows: &[usize]) -> usize {
        let mut counts = [0u32; N_CLASSES];
        for &i in rows {
            counts[self.d.label(i).index()] += 1;
        }
        self.nodes.push(TreeNode::Leaf {
            counts,
            predicted: TurnoverClass::argmax(&counts),
        });
        self.nodes.len() - 1
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let f = self.d.n_features();
        let stop = self.params.max_depth.is_some_and(|m| depth >= m)
            || rows.len() < self.params.min_samples_split.max(2);
        if stop {
            return self.leaf(&rows);
        }
        let mut candidates = index::sample(self.rng, f, self.mtry).into_vec();
        candidates.sort_unstable();
        if let Some(level) = self.params.significance_gate {
            let mut best = (f64::INFINITY, 0usize);
            for &j in &candidates {
                let p = association_p(self.d, &rows, j);
                if p < best.0 {
                    best = (p, j);
                }
            }
            if (best.0 * candidates.len() as f64).min(1.0) >= level {
                return self.leaf(&rows);
            }
            candidates = vec![best.1];
        }
        let found = best_split_constrained(
            self.d,
            &rows,
            &candidates,
            self.params.min_samples_leaf,
            &mut self.scratch,
        );
        let Some((split, _, _)) = found else {
            return self.leaf(&rows);
        };

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| self.d.value(i, split.feature) <= split.threshold);
        drop(rows);
        let me = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            counts: [0; N_CLASSES],
            predicted: TurnoverClass::A,
        });
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[me] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        me
    }
}

/// Grows a tree on `rows` (duplicates allowed) drawing per-node feature
/// subsets from `rng`.
pub(crate) fn grow_tree(
    d: &LabeledDataset,
    rows: Vec<usize>,
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
) -> Result<DecisionTree> {
    params.check()?;
    if rows.is_empty() {
        return Err(Error::domain("cannot grow a tree on zero rows"));
    }
    let mtry = params.resolve_mtry(d.n_features())?;
    let mut b = Builder {
        d,
        params,
        mtry,
        rng,
        nodes: Vec::new(),
        scratch: Vec::with_capacity(rows.len()),
    };
    b.grow(rows, 0);
    Ok(DecisionTree {
        nodes: b.nodes,
        n_features: d.n_features(),
    })
}

/// Trains one tree on `rows`, deterministic in `(d, rows, params, rng_seed)`.
pub fn train_tree(
    d: &LabeledDataset,
    rows: &[usize],
    params: &TreeParams,
    rng_seed: u64,
) -> Result<DecisionTree> {
    let mut rng = seed::rng(rng_seed);
    grow_tree(d, rows.to_vec(), params, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use TurnoverClass::*;

    fn dataset(rows: Vec<Vec<f64>>, labels: Vec<TurnoverClass>) -> LabeledDataset {
        let f = rows[0].len();
        LabeledDataset::new((0..f).map(|j| format!("x{j}")).collect(), rows, labels).unwrap()
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini_impurity(&[10]).unwrap(), 0.0);
        assert_eq!(gini_impurity(&[5, 5]).unwrap(), 0.5);
        assert!((gini_impurity(&[1, 1, 1, 1, 1]).unwrap() - 0.8).abs() < 1e-15);
        assert!(gini_impurity(&[0, 0]).is_err());
    }

    #[test]
    fn best_split_on_two_clusters() {
        let d = dataset(
            vec![vec![1.0], vec![2.0], vec![10.0], vec![11.0]],
            vec![A, A, B, B],
        );
        let s = best_split(&d, &[0, 1, 2, 3], &[0]).unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.threshold, 6.0);
        assert!((s.impurity_decrease - 0.5).abs() < 1e-15);
    }

    #[test]
    fn no_split_when_pure_or_constant() {
        let d = dataset(vec![vec![1.0], vec![2.0], vec![3.0]], vec![A, A, A]);
        assert!(best_split(&d, &[0, 1, 2], &[0]).is_none());
        let d = dataset(vec![vec![4.0], vec![4.0], vec![4.0]], vec![A, B, C]);
        assert!(best_split(&d, &[0, 1, 2], &[0]).is_none());
    }

    #[test]
    fn ties_prefer_lower_feature_and_threshold() {
        // Features 0 and 1 are identical, so both give the same best score.
        let d = dataset(
            vec![
                vec![1.0, 1.0],
                vec![2.0, 2.0],
                vec![3.0, 3.0],
                vec![4.0, 4.0],
            ],
            vec![A, B, A, B],
        );
        let s = best_split(&d, &[0, 1, 2, 3], &[1, 0]).unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.threshold, 1.5);
    }

    fn separable(n: usize) -> LabeledDataset {
        let rows = (0..n).map(|i| vec![i as f64, (i * 7 % 5) as f64]).collect();
        let labels = (0..n).map(|i| if i < n / 2 { A } else { C }).collect();
        dataset(rows, labels)
    }

    #[test]
    fn full_tree_fits_separable_data() {
        let d = separable(20);
        let rows: Vec<usize> = (0..20).collect();
        let params = TreeParams {
            mtry: Some(2),
            ..TreeParams::default()
        };
        let t = train_tree(&d, &rows, &params, 5).unwrap();
        for i in 0..20 {
            assert_eq!(t.predict(d.row(i)).unwrap(), d.label(i));
        }
        assert_eq!(t, train_tree(&d, &rows, &params, 5).unwrap());
    }

    #[test]
    fn depth_zero_is_majority_leaf() {
        let d = dataset(vec![vec![1.0], vec![2.0], vec![3.0]], vec![B, C, C]);
        let params = TreeParams {
            max_depth: Some(0),
            ..TreeParams::default()
        };
        let t = train_tree(&d, &[0, 1, 2], &params, 0).unwrap();
        assert!(t.is_leaf());
        assert_eq!(t.predict(&[100.0]).unwrap(), C);
    }

    #[test]
    fn min_leaf_is_respected() {
        let d = separable(20);
        let params = TreeParams {
            mtry: Some(2),
            min_samples_leaf: 4,
            ..TreeParams::default()
        };
        let t = train_tree(&d, &(0..20).collect::<Vec<_>>(), &params, 1).unwrap();
        for node in t.nodes() {
            if let TreeNode::Leaf { counts, .. } = node {
                assert!(counts.iter().sum::<u32>() >= 4);
            }
        }
    }

    #[test]
    fn bad_params_and_arity() {
        let d = separable(10);
        let rows: Vec<usize> = (0..10).collect();
        let p = TreeParams {
            mtry: Some(3),
            ..TreeParams::default()
        };
        assert!(train_tree(&d, &rows, &p, 0).is_err());
        assert!(train_tree(&d, &[], &TreeParams::default(), 0).is_err());
        let t = train_tree(&d, &rows, &TreeParams::default(), 0).unwrap();
        assert!(t.predict(&[1.0]).is_err());
    }

    #[test]
    fn association_test_values() {
        // Two classes, x equal to the class index: SSB/SST = 1, statistic n-1.
        let d = dataset(
            (0..20).map(|i| vec![(i % 2) as f64, 3.0]).collect(),
            (0..20).map(|i| TurnoverClass::ALL[i % 2]).collect(),
        );
        let rows: Vec<usize> = (0..20).collect();
        let p = association_p(&d, &rows, 0);
        let expected = ChiSquared::new(1.0).unwrap().sf(19.0);
        assert!((p - expected).abs() < 1e-15, "{p}");
        assert_eq!(association_p(&d, &rows, 1), 1.0);
        let pure = dataset(vec![vec![1.0], vec![2.0]], vec![A, A]);
        assert_eq!(association_p(&pure, &[0, 1], 0), 1.0);
    }

    #[test]
    fn flat_serialization_round_trip() {
        let d = separable(30);
        let t = train_tree(&d, &(0..30).collect::<Vec<_>>(), &TreeParams::default(), 9).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        let back: DecisionTree = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<DecisionTree>(
            r#"{"n_features":1,"feature":[0],"threshold":[1.0],"left":[5],"right":[6],"counts":[[0,0,0,0,0]]}"#
        )
        .is_err());
    }
}
