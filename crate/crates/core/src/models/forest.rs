//! Bagged ensembles of regression trees.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{fit_centered, Tree, TreeParams};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_estimators: usize,
    #[serde(flatten)]
    pub tree: TreeParams,
    pub bootstrap: bool,
    /// Bootstrap sample size as a fraction of the training rows.
    pub sample_fraction: f64,
    /// Fraction of features considered at each split.
    pub max_features: f64,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            tree: TreeParams::default(),
            bootstrap: true,
            sample_fraction: 1.0,
            max_features: 1.0,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        self.tree.validate()?;
        if self.n_estimators < 1 {
            return Err(Error::config("n_estimators must be >= 1"));
        }
        for (name, v) in [
            ("sample_fraction", self.sample_fraction),
            ("max_features", self.max_features),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut s = 0.0;
        for t in &self.trees {
            s += t.predict_row(row);
        }
        s / self.trees.len() as f64
    }
}

pub fn fit_forest(params: &ForestParams, x: &[Vec<f64>], y: &[f64]) -> Result<Forest> {
    params.validate()?;
    let n = y.len();
    if n == 0 {
        return Err(Error::EmptyDataset("cannot fit a forest on zero rows".into()));
    }
    let spec = params.tree.spec(params.max_features);
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::stream(params.seed, &[rng::label("forest"), k as u64]);
            let rows: Vec<usize> = if params.bootstrap {
                let size = ((params.sample_fraction * n as f64).round() as usize).max(1);
                (0..size).map(|_| r.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            fit_centered(x, y, rows, &spec, Some(&mut r))
        })
        .collect();
    Ok(Forest { trees })
}
