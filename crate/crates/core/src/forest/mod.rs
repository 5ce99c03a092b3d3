//! From-scratch random forest: CART trees, bagged ensembles and out-of-bag
//! permutation importance.

mod ensemble;
mod importance;
mod tree;

pub use ensemble::{
    predict_forest, train_forest, train_forest_with, ForestModel, ForestOptions,
    FOREST_SCHEMA_VERSION,
};
pub use importance::{permutation_importance, z_scores, ImportanceScores};
pub use tree::{
    association_p, best_split, gini_impurity, train_tree, ClassCounts, DecisionTree, Split,
    TreeNode, TreeParams,
};
