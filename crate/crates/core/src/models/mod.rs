//! Regressor suite behind one fit/predict contract.

pub mod dnn;
pub mod forest;
pub mod gbdt;
pub mod knn;
pub mod svr;
pub mod tree;

use serde::{Deserialize, Serialize};

use crate::dataset::{Preprocessor, TabularDataset};
use crate::error::{Error, Result};

pub use dnn::{Activation, DnnParams, Mlp, Optimizer};
pub use forest::{Forest, ForestParams};
pub use gbdt::{Gbdt, GbdtParams};
pub use knn::{Knn, KnnParams, Metric};
pub use svr::{LinearSvr, LinearSvrParams};
pub use tree::{tree_best_split, Growth, Split, Tree, TreeParams};

pub const FORMAT_VERSION: u32 = 1;

/// Hyperparameters tagged by model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    LinearSvr(LinearSvrParams),
    Knn(KnnParams),
    DecisionTree(TreeParams),
    RandomForest(ForestParams),
    Gbdt(GbdtParams),
    Dnn(DnnParams),
}

impl ModelParams {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelParams::LinearSvr(_) => "linear_svr",
            ModelParams::Knn(_) => "knn",
            ModelParams::DecisionTree(_) => "decision_tree",
            ModelParams::RandomForest(_) => "random_forest",
            ModelParams::Gbdt(_) => "gbdt",
            ModelParams::Dnn(_) => "dnn",
        }
    }

    /// Default hyperparameters for a family name.
    pub fn default_for(kind: &str) -> Result<Self> {
        Ok(match kind {
            "linear_svr" => ModelParams::LinearSvr(Default::default()),
            "knn" => ModelParams::Knn(Default::default()),
            "decision_tree" => ModelParams::DecisionTree(Default::default()),
            "random_forest" => ModelParams::RandomForest(Default::default()),
            "gbdt" => ModelParams::Gbdt(Default::default()),
            "dnn" => ModelParams::Dnn(Default::default()),
            other => return Err(Error::config(format!("unknown model kind {other:?}"))),
        })
    }

    /// Distance- and gradient-based families see standardized features.
    pub fn needs_scaling(&self) -> bool {
        matches!(
            self,
            ModelParams::LinearSvr(_) | ModelParams::Knn(_) | ModelParams::Dnn(_)
        )
    }

    /// Returns a copy with the given fields overwritten, e.g.
    /// `{"max_depth": 4}`.
    pub fn with_overrides(&self, overrides: &serde_json::Map<String, serde_json::Value>) -> Result<Self> {
        let mut v = serde_json::to_value(self)?;
        let obj = v.as_object_mut().expect("params serialize to an object");
        for (k, val) in overrides {
            if k == "kind" || !obj.contains_key(k) {
                return Err(Error::config(format!("{} has no hyperparameter {k:?}", self.kind())));
            }
            obj.insert(k.clone(), val.clone());
        }
        serde_json::from_value(v).map_err(|e| Error::config(format!("invalid hyperparameters: {e}")))
    }

    /// Replaces the random seed of stochastic families; a no-op for the rest.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut p = self.clone();
        match &mut p {
            ModelParams::LinearSvr(x) => x.seed = seed,
            ModelParams::RandomForest(x) => x.seed = seed,
            ModelParams::Gbdt(x) => x.seed = seed,
            ModelParams::Dnn(x) => x.seed = seed,
            ModelParams::Knn(_) | ModelParams::DecisionTree(_) => {}
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelParams::LinearSvr(p) => p.validate(),
            ModelParams::Knn(_) => Ok(()),
            ModelParams::DecisionTree(p) => p.validate(),
            ModelParams::RandomForest(p) => p.validate(),
            ModelParams::Gbdt(p) => p.validate(),
            ModelParams::Dnn(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum TrainedModel {
    LinearSvr(LinearSvr),
    Knn(Knn),
    DecisionTree(Tree),
    RandomForest(Forest),
    Gbdt(Gbdt),
    Dnn(Mlp),
}

impl TrainedModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self {
            TrainedModel::LinearSvr(m) => m.predict_row(row),
            TrainedModel::Knn(m) => m.predict_row(row),
            TrainedModel::DecisionTree(m) => m.predict_row(row),
            TrainedModel::RandomForest(m) => m.predict_row(row),
            TrainedModel::Gbdt(m) => m.predict_row(row),
            TrainedModel::Dnn(m) => m.predict_row(row),
        }
    }
}

/// Anything that maps raw feature rows to committer-probability estimates.
pub trait Predictor: Send + Sync {
    fn n_features(&self) -> usize;
    fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>>;

    fn predict_one(&self, row: &[f64]) -> Result<f64> {
        Ok(self.predict(&[row.to_vec()])?[0])
    }
}

/// A trained model together with its hyperparameters and input transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorHandle {
    pub format_version: u32,
    pub params: ModelParams,
    pub preprocessor: Preprocessor,
    pub trained: TrainedModel,
}

impl RegressorHandle {
    pub fn kind(&self) -> &'static str {
        self.params.kind()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let h: Self = serde_json::from_str(s)?;
        if h.format_version != FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "model format version {} is not supported (expected {FORMAT_VERSION})",
                h.format_version
            )));
        }
        Ok(h)
    }
}

impl Predictor for RegressorHandle {
    fn n_features(&self) -> usize {
        self.preprocessor.columns.len()
    }

    fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter()
            .map(|r| Ok(self.trained.predict_row(&self.preprocessor.transform_row(r)?)))
            .collect()
    }

    fn predict_one(&self, row: &[f64]) -> Result<f64> {
        Ok(self.trained.predict_row(&self.preprocessor.transform_row(row)?))
    }
}

/// Trains the model family described by `params` on `train`.
pub fn fit(params: &ModelParams, train: &TabularDataset) -> Result<RegressorHandle> {
    if train.is_empty() {
        return Err(Error::EmptyDataset("training set is empty".into()));
    }
    params.validate()?;
    let preprocessor = Preprocessor::fit(train, params.needs_scaling())?;
    let x = preprocessor.transform(&train.features)?;
    let y = &train.target;
    let trained = match params {
        ModelParams::LinearSvr(p) => TrainedModel::LinearSvr(LinearSvr::fit(p, &x, y)?),
        ModelParams::Knn(p) => TrainedModel::Knn(Knn::fit(p, &x, y)?),
        ModelParams::DecisionTree(p) => TrainedModel::DecisionTree(tree::fit_tree(p, &x, y)?),
        ModelParams::RandomForest(p) => TrainedModel::RandomForest(forest::fit_forest(p, &x, y)?),
        ModelParams::Gbdt(p) => TrainedModel::Gbdt(gbdt::fit_gbdt(p, &x, y)?),
        ModelParams::Dnn(p) => TrainedModel::Dnn(Mlp::fit(p, &x, y)?),
    };
    Ok(RegressorHandle {
        format_version: FORMAT_VERSION,
        params: params.clone(),
        preprocessor,
        trained,
    })
}
