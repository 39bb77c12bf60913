//! Cross-validated hyperparameter search.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::benchmark::rmse;
use crate::dataset::TabularDataset;
use crate::error::{Error, Result};
use crate::models::{self, ModelParams, Predictor};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Domain {
    Int {
        low: i64,
        high: i64,
    },
    Real {
        low: f64,
        high: f64,
        #[serde(default)]
        log: bool,
    },
    Categorical {
        values: Vec<Value>,
    },
}

impl Domain {
    fn validate(&self, name: &str) -> Result<()> {
        let ok = match self {
            Domain::Int { low, high } => low <= high,
            Domain::Real { low, high, log } => {
                low <= high && low.is_finite() && high.is_finite() && (!log || *low > 0.0)
            }
            Domain::Categorical { values } => !values.is_empty(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!(
                "hyperparameter domain for {name:?} is empty or invalid"
            )))
        }
    }

    fn sample(&self, r: &mut impl Rng) -> Value {
        match self {
            Domain::Int { low, high } => json!(r.random_range(*low..=*high)),
            Domain::Real { low, high, log } => {
                if low == high {
                    json!(low)
                } else if *log {
                    json!(r.random_range(low.ln()..=high.ln()).exp())
                } else {
                    json!(r.random_range(*low..=*high))
                }
            }
            Domain::Categorical { values } => values[r.random_range(0..values.len())].clone(),
        }
    }

    fn grid(&self, points: usize) -> Vec<Value> {
        let points = points.max(1);
        match self {
            Domain::Int { low, high } => {
                let span = (high - low) as usize + 1;
                if span <= points {
                    (*low..=*high).map(|v| json!(v)).collect()
                } else {
                    let mut v: Vec<i64> = (0..points)
                        .map(|i| low + ((high - low) as f64 * i as f64 / (points - 1) as f64).round() as i64)
                        .collect();
                    v.dedup();
                    v.into_iter().map(|x| json!(x)).collect()
                }
            }
            Domain::Real { low, high, log } => {
                if points == 1 || low == high {
                    return vec![json!(low)];
                }
                (0..points)
                    .map(|i| {
                        let f = i as f64 / (points - 1) as f64;
                        if *log {
                            json!((low.ln() + f * (high.ln() - low.ln())).exp())
                        } else {
                            json!(low + f * (high - low))
                        }
                    })
                    .collect()
            }
            Domain::Categorical { values } => values.clone(),
        }
    }
}

/// Named hyperparameter domains, visited in name order.
pub type HyperparamSpace = BTreeMap<String, Domain>;

/// Search space used when a model entry does not give one.
pub fn default_space(kind: &str) -> HyperparamSpace {
    let int = |low, high| Domain::Int { low, high };
    let real = |low, high, log| Domain::Real { low, high, log };
    let cat = |v: Vec<Value>| Domain::Categorical { values: v };
    let entries: Vec<(&str, Domain)> = match kind {
        "knn" => vec![
            ("k", int(1, 50)),
            ("metric", cat(vec![json!("euclidean"), json!("manhattan")])),
        ],
        "decision_tree" => vec![("max_depth", int(2, 12))],
        "random_forest" => vec![("max_depth", int(2, 12)), ("n_estimators", int(10, 300))],
        "gbdt" => vec![
            ("eta", real(0.01, 0.5, true)),
            ("reg_lambda", real(0.0, 10.0, false)),
            ("max_depth", int(2, 12)),
            ("max_leaves", int(4, 64)),
        ],
        "linear_svr" => vec![("c", real(0.01, 100.0, true)), ("epsilon", real(0.001, 0.1, false))],
        "dnn" => vec![
            ("hidden", cat(vec![json!([32, 32]), json!([64, 64]), json!([128, 128])])),
            ("learning_rate", real(1e-4, 1e-2, true)),
        ],
        _ => vec![],
    };
    entries.into_iter().map(|(k, d)| (k.to_string(), d)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    Random,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub budget: usize,
    pub sampler: Sampler,
    pub k: usize,
    pub seed: u64,
    /// Points per continuous dimension for the grid sampler.
    pub grid_points: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            budget: 30,
            sampler: Sampler::Random,
            k: 3,
            seed: 0,
            grid_points: 3,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget < 1 {
            return Err(Error::config("search budget must be >= 1"));
        }
        if self.k < 2 {
            return Err(Error::config("need k >= 2 folds"));
        }
        Ok(())
    }
}

/// `k` disjoint folds covering `0..n`, sizes differing by at most one.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || n < k {
        return Err(Error::config(format!("cannot split {n} rows into {k} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, &[rng::label("kfold")]));
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = n / k + usize::from(f < n % k);
        folds.push(idx[start..start + size].to_vec());
        start += size;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvScore {
    pub fold_rmse: Vec<f64>,
    /// Mean of the fold scores, or +inf if any fold failed.
    pub mean_rmse: f64,
    pub error: Option<String>,
}

/// Trains on all folds but one and scores RMSE on the held-out fold, for
/// every fold.
pub fn cross_validate(params: &ModelParams, data: &TabularDataset, folds: &[Vec<usize>]) -> CvScore {
    let mut fold_rmse = Vec::with_capacity(folds.len());
    for (i, held) in folds.iter().enumerate() {
        let train: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        let valid = data.subset(held);
        let score = models::fit(params, &data.subset(&train))
            .and_then(|h| h.predict(&valid.features))
            .and_then(|p| rmse(&p, &valid.target));
        match score {
            Ok(s) if s.is_finite() => fold_rmse.push(s),
            Ok(s) => {
                return CvScore {
                    fold_rmse,
                    mean_rmse: f64::INFINITY,
                    error: Some(format!("fold {i} scored {s}")),
                }
            }
            Err(e) => {
                return CvScore {
                    fold_rmse,
                    mean_rmse: f64::INFINITY,
                    error: Some(format!("fold {i}: {e}")),
                }
            }
        }
    }
    let mean_rmse = fold_rmse.iter().sum::<f64>() / fold_rmse.len() as f64;
    CvScore {
        fold_rmse,
        mean_rmse,
        error: None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub index: usize,
    pub params: ModelParams,
    pub score: CvScore,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: ModelParams,
    pub best_trial: usize,
    pub trials: Vec<Trial>,
    pub t_hyper: f64,
}

impl SearchOutcome {
    /// Writes `trial,params_json,mean_rmse,wall_time_s`.
    pub fn write_trials<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["trial", "params_json", "mean_rmse", "wall_time_s"])?;
        for t in &self.trials {
            out.write_record([
                t.index.to_string(),
                serde_json::to_string(&t.params)?,
                t.score.mean_rmse.to_string(),
                t.wall_time_s.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<trials>", e))?;
        Ok(())
    }
}

/// The hyperparameter assignments to try, in trial order.
pub fn candidates(space: &HyperparamSpace, config: &SearchConfig) -> Result<Vec<Map<String, Value>>> {
    for (k, d) in space {
        d.validate(k)?;
    }
    Ok(match config.sampler {
        Sampler::Random => (0..config.budget)
            .map(|i| {
                let mut r = rng::stream(config.seed, &[rng::label("trial"), i as u64]);
                space.iter().map(|(k, d)| (k.clone(), d.sample(&mut r))).collect()
            })
            .collect(),
        Sampler::Grid => {
            let mut combos: Vec<Map<String, Value>> = vec![Map::new()];
            for (k, d) in space {
                let pts = d.grid(config.grid_points);
                combos = combos
                    .into_iter()
                    .flat_map(|c| {
                        pts.iter().map(move |p| {
                            let mut c = c.clone();
                            c.insert(k.clone(), p.clone());
                            c
                        })
                    })
                    .collect();
            }
            combos.truncate(config.budget);
            combos
        }
    })
}

/// Evaluates `budget` configurations drawn from `space` around `base` by
/// k-fold cross-validation; the lowest mean RMSE wins, earliest trial on
/// ties. `t_hyper` is the wall time of the whole search.
pub fn search(
    base: &ModelParams,
    space: &HyperparamSpace,
    train: &TabularDataset,
    config: &SearchConfig,
) -> Result<SearchOutcome> {
    let start = Instant::now();
    config.validate()?;
    let folds = kfold_split(train.len(), config.k, config.seed)?;
    let params = candidates(space, config)?
        .iter()
        .map(|o| base.with_overrides(o))
        .collect::<Result<Vec<_>>>()?;
    let trials: Vec<Trial> = params
        .into_par_iter()
        .enumerate()
        .map(|(index, params)| {
            let t0 = Instant::now();
            let score = cross_validate(&params, train, &folds);
            Trial {
                index,
                params,
                score,
                wall_time_s: t0.elapsed().as_secs_f64(),
            }
        })
        .collect();
    let best = trials
        .iter()
        .filter(|t| t.score.mean_rmse.is_finite())
        .min_by(|a, b| {
            a.score
                .mean_rmse
                .total_cmp(&b.score.mean_rmse)
                .then(a.index.cmp(&b.index))
        })
        .ok_or(Error::AllTrialsFailed(trials.len()))?;
    let (best_params, best_trial) = (best.params.clone(), best.index);
    Ok(SearchOutcome {
        best: best_params,
        best_trial,
        trials,
        t_hyper: start.elapsed().as_secs_f64(),
    })
}
