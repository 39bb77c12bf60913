//! Brute-force k-nearest-neighbour regression.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    Manhattan,
    Minkowski,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnnParams {
    pub k: usize,
    pub metric: Metric,
    /// Exponent for the Minkowski metric.
    pub p: f64,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self {
            k: 5,
            metric: Metric::Euclidean,
            p: 2.0,
        }
    }
}

impl KnnParams {
    pub fn validate(&self, n_train: usize) -> Result<()> {
        if self.k < 1 || self.k > n_train {
            return Err(Error::config(format!("k = {} must lie in [1, {n_train}]", self.k)));
        }
        if self.metric == Metric::Minkowski && !(self.p >= 1.0) {
            return Err(Error::config("Minkowski exponent p must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub params: KnnParams,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

/// Distance under `metric`. Euclidean distance is returned squared, which
/// preserves ordering.
pub fn distance(metric: Metric, p: f64, a: &[f64], b: &[f64]) -> f64 {
    let it = a.iter().zip(b).map(|(u, v)| (u - v).abs());
    match metric {
        Metric::Euclidean => it.map(|d| d * d).sum(),
        Metric::Manhattan => it.sum(),
        Metric::Minkowski => it.map(|d| d.powf(p)).sum::<f64>().powf(1.0 / p),
    }
}

impl Knn {
    pub fn fit(params: &KnnParams, x: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        params.validate(y.len())?;
        Ok(Self {
            params: params.clone(),
            x: x.to_vec(),
            y: y.to_vec(),
        })
    }

    /// Indices of the k nearest rows, nearest first; equal distances are
    /// ordered by row index.
    pub fn neighbors(&self, row: &[f64]) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(i, r)| (distance(self.params.metric, self.params.p, row, r), i))
            .collect();
        let k = self.params.k;
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < d.len() {
            d.select_nth_unstable_by(k - 1, cmp);
            d.truncate(k);
        }
        d.sort_by(cmp);
        d.into_iter().map(|(_, i)| i).collect()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let nb = self.neighbors(row);
        nb.iter().map(|&i| self.y[i]).sum::<f64>() / nb.len() as f64
    }
}
