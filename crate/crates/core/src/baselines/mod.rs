//! Non-forest comparison classifiers.

mod linear;
mod single_tree;

pub use linear::{
    hinge_objective, predict_linear, softmax_objective, train_multinomial_logreg, train_svm_ovr,
    Batch, GdConfig, LinearKind, LinearModel,
};
pub use single_tree::{train_single_tree, TreeVariant};
