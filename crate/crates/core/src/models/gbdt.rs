//! Gradient-boosted regression trees on squared loss.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::tree::{grow, mean, GrowSpec, Growth, Tree};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtParams {
    pub n_estimators: usize,
    pub eta: f64,
    pub growth: Growth,
    /// Depth limit for level-wise growth.
    pub max_depth: usize,
    /// Leaf budget for leaf-wise growth.
    pub max_leaves: usize,
    pub min_samples_split: usize,
    pub subsample: f64,
    pub reg_alpha: f64,
    pub reg_lambda: f64,
    pub seed: u64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            eta: 0.1,
            growth: Growth::LevelWise,
            max_depth: 6,
            max_leaves: 31,
            min_samples_split: 2,
            subsample: 1.0,
            reg_alpha: 0.0,
            reg_lambda: 1.0,
            seed: 0,
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::config("eta must lie in [0, 1]"));
        }
        if self.reg_alpha.is_nan() || self.reg_alpha < 0.0 || self.reg_lambda.is_nan() || self.reg_lambda < 0.0 {
            return Err(Error::config("reg_alpha and reg_lambda must be >= 0"));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::config("subsample must lie in (0, 1]"));
        }
        if self.max_depth < 1 || self.max_leaves < 2 || self.min_samples_split < 2 {
            return Err(Error::config(
                "need max_depth >= 1, max_leaves >= 2, min_samples_split >= 2",
            ));
        }
        Ok(())
    }

    fn spec(&self) -> GrowSpec {
        GrowSpec {
            max_depth: match self.growth {
                Growth::LevelWise => Some(self.max_depth),
                Growth::LeafWise => None,
            },
            max_leaves: match self.growth {
                Growth::LevelWise => None,
                Growth::LeafWise => Some(self.max_leaves),
            },
            min_samples_split: self.min_samples_split,
            reg_lambda: self.reg_lambda,
            reg_alpha: self.reg_alpha,
            feature_fraction: 1.0,
            growth: self.growth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbdt {
    pub base: f64,
    pub eta: f64,
    pub trees: Vec<Tree>,
}

impl Gbdt {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut s = 0.0;
        for t in &self.trees {
            s += t.predict_row(row);
        }
        self.base + self.eta * s
    }
}

pub fn fit_gbdt(params: &GbdtParams, x: &[Vec<f64>], y: &[f64]) -> Result<Gbdt> {
    params.validate()?;
    let n = y.len();
    if n == 0 {
        return Err(Error::EmptyDataset("cannot fit boosting on zero rows".into()));
    }
    let base = mean(y.iter().copied());
    let spec = params.spec();
    let mut fitted = vec![0.0; n];
    let mut trees = Vec::with_capacity(params.n_estimators);
    let mut r = rng::stream(params.seed, &[rng::label("gbdt")]);
    let size = ((params.subsample * n as f64).round() as usize).clamp(1, n);
    for _ in 0..params.n_estimators {
        let residual: Vec<f64> = y
            .iter()
            .zip(&fitted)
            .map(|(v, f)| v - (base + params.eta * f))
            .collect();
        let rows: Vec<usize> = if size < n {
            let mut s = sample(&mut r, n, size).into_vec();
            s.sort_unstable();
            s
        } else {
            (0..n).collect()
        };
        let tree = grow(x, &residual, rows, &spec, None);
        for (f, row) in fitted.iter_mut().zip(x) {
            *f += tree.predict_row(row);
        }
        trees.push(tree);
    }
    Ok(Gbdt {
        base,
        eta: params.eta,
        trees,
    })
}
