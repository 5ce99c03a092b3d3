//! Uniform handle over the five trained classifiers and their JSON envelope.

use serde::{Deserialize, Serialize};

use crate::baselines::{predict_linear, LinearModel, TreeVariant};
use crate::data_model::{LabeledDataset, TurnoverClass};
use crate::error::{Error, Result};
use crate::forest::{DecisionTree, ForestModel};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_type", rename_all = "snake_case")]
pub enum TrainedModel {
    RandomForest(ForestModel),
    DecisionTree {
        variant: TreeVariant,
        feature_names: Vec<String>,
        tree: DecisionTree,
    },
    Linear(LinearModel),
}

impl TrainedModel {
    pub fn feature_names(&self) -> &[String] {
        match self {
            TrainedModel::RandomForest(m) => &m.feature_names,
            TrainedModel::DecisionTree { feature_names, .. } => feature_names,
            TrainedModel::Linear(m) => &m.feature_names,
        }
    }

    pub fn predict(&self, row: &[f64]) -> Result<TurnoverClass> {
        match self {
            TrainedModel::RandomForest(m) => m.predict(row),
            TrainedModel::DecisionTree { tree, .. } => tree.predict(row),
            TrainedModel::Linear(m) => predict_linear(m, row),
        }
    }

    /// Errors unless `d` has exactly this model's feature columns, in order.
    pub fn check_features(&self, name: &str, d: &LabeledDataset) -> Result<()> {
        let expected = self.feature_names();
        if expected != d.feature_names() {
            let missing: Vec<&String> = expected
                .iter()
                .filter(|f| !d.feature_names().contains(f))
                .collect();
            let extra: Vec<&String> = d
                .feature_names()
                .iter()
                .filter(|f| !expected.contains(f))
                .collect();
            let message = if missing.is_empty() && extra.is_empty() {
                "feature columns are in a different order".to_string()
            } else {
                format!("missing {missing:?}, unexpected {extra:?}")
            };
            return Err(Error::FeatureMismatch {
                model: name.to_string(),
                message,
            });
        }
        Ok(())
    }

    pub fn predict_dataset(&self, name: &str, d: &LabeledDataset) -> Result<Vec<TurnoverClass>> {
        self.check_features(name, d)?;
        d.rows().map(|r| self.predict(r)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub schema_version: u32,
    pub name: String,
    pub model: TrainedModel,
}

impl ModelDocument {
    pub fn new(name: impl Into<String>, model: TrainedModel) -> Self {
        ModelDocument {
            schema_version: MODEL_SCHEMA_VERSION,
            name: name.into(),
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(s)?;
        if doc.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "model schema_version {} is not supported (expected {MODEL_SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        Ok(doc)
    }
}
