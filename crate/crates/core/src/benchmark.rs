//! Seven-metric scoring, weighted cost and model rankings.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const METRIC_NAMES: [&str; 7] = [
    "rmse",
    "t_hyper",
    "t_train",
    "t_test",
    "t_deploy",
    "delta_p",
    "total_alarms",
];

/// The default cost weights; they sum to one.
pub const DEFAULT_WEIGHTS: [f64; 7] = [0.125, 0.05, 0.05, 0.05, 0.125, 0.3, 0.3];

/// Uniform sampling bounds for each cost weight.
pub const DEFAULT_WEIGHT_BOUNDS: [(f64, f64); 7] = [
    (0.1, 0.2),
    (0.05, 0.1),
    (0.05, 0.1),
    (0.05, 0.1),
    (0.1, 0.2),
    (0.3, 4.0),
    (0.3, 4.0),
];

pub type MetricVector = [f64; 7];
pub type WeightVector = [f64; 7];

/// Root of the mean squared difference.
pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: targets.len(),
            got: predictions.len(),
        });
    }
    if targets.is_empty() {
        return Err(Error::EmptyDataset("RMSE of zero rows".into()));
    }
    let sse: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / targets.len() as f64).sqrt())
}

/// Metrics for every model on one dataset, keyed by model name.
pub type MetricTable = BTreeMap<String, MetricVector>;

/// Divides each metric by its maximum over models. Columns whose maximum
/// is zero stay zero; their indices are returned as notes.
pub fn scale_metrics(table: &MetricTable) -> Result<(MetricTable, Vec<usize>)> {
    if table.is_empty() {
        return Err(Error::config("cannot scale an empty metric table"));
    }
    let mut max = [0.0f64; 7];
    for m in table.values() {
        for (mx, v) in max.iter_mut().zip(m) {
            if v.is_nan() || *v < 0.0 {
                return Err(Error::Domain(format!("metric value {v} is not >= 0")));
            }
            *mx = mx.max(*v);
        }
    }
    let zero_cols: Vec<usize> = (0..7).filter(|&i| max[i] == 0.0).collect();
    let scaled = table
        .iter()
        .map(|(k, m)| {
            let mut s = [0.0; 7];
            for i in 0..7 {
                s[i] = if max[i] > 0.0 { m[i] / max[i] } else { 0.0 };
            }
            (k.clone(), s)
        })
        .collect();
    Ok((scaled, zero_cols))
}

pub fn cost(scaled: &MetricVector, w: &WeightVector) -> f64 {
    scaled.iter().zip(w).map(|(m, a)| m * a).sum()
}

/// Dense ranks, 1 = lowest cost. Costs within a relative 1e-12 of the
/// first member of a tie group share its rank.
pub fn rank_models(costs: &BTreeMap<String, f64>) -> BTreeMap<String, usize> {
    let mut items: Vec<(&String, f64)> = costs.iter().map(|(k, &c)| (k, c)).collect();
    items.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(b.0)));
    let mut out = BTreeMap::new();
    let mut rank = 0;
    let mut group_start = f64::NEG_INFINITY;
    for (name, c) in items {
        if rank == 0 || c - group_start > 1e-12 * group_start.abs().max(c.abs()) {
            rank += 1;
            group_start = c;
        }
        out.insert(name.clone(), rank);
    }
    out
}

/// Mean rank per model over datasets. Every model must be ranked on every
/// dataset.
pub fn average_local_ranking(rankings: &BTreeMap<String, BTreeMap<String, usize>>) -> Result<BTreeMap<String, f64>> {
    let models: Vec<&String> = match rankings.values().next() {
        Some(r) => r.keys().collect(),
        None => return Ok(BTreeMap::new()),
    };
    let mut out = BTreeMap::new();
    for m in models {
        let mut s = 0.0;
        for (dataset, r) in rankings {
            s += *r.get(m).ok_or_else(|| Error::MissingCell {
                model: m.clone(),
                dataset: dataset.clone(),
            })? as f64;
        }
        out.insert(m.clone(), s / rankings.len() as f64);
    }
    for (dataset, r) in rankings {
        if r.len() != out.len() {
            let extra = r.keys().find(|k| !out.contains_key(*k)).cloned().unwrap_or_default();
            return Err(Error::MissingCell {
                model: extra,
                dataset: dataset.clone(),
            });
        }
    }
    Ok(out)
}

pub fn validate_bounds(bounds: &[(f64, f64); 7]) -> Result<()> {
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::config(format!(
                "weight bound a_{} = [{lo}, {hi}] is invalid",
                i + 1
            )));
        }
    }
    Ok(())
}

/// `count` weight vectors with each coefficient uniform in its bounds.
pub fn sample_weight_vectors(bounds: &[(f64, f64); 7], count: usize, seed: u64) -> Result<Vec<WeightVector>> {
    validate_bounds(bounds)?;
    let mut r = rng::stream(seed, &[rng::label("weights")]);
    Ok((0..count)
        .map(|_| {
            let mut w = [0.0; 7];
            for (a, &(lo, hi)) in w.iter_mut().zip(bounds) {
                *a = if lo == hi { lo } else { r.random_range(lo..=hi) };
            }
            w
        })
        .collect())
}

/// Local ranks for one scaled table under one weight vector.
pub fn local_ranking(scaled: &MetricTable, w: &WeightVector) -> BTreeMap<String, usize> {
    let costs = scaled.iter().map(|(k, m)| (k.clone(), cost(m, w))).collect();
    rank_models(&costs)
}

/// For each weight vector, ranks are averaged over datasets; the result is
/// then averaged over weight vectors. Sorted ascending by mean rank, then
/// by name.
pub fn global_ranking(tables: &BTreeMap<String, MetricTable>, weights: &[WeightVector]) -> Result<Vec<(String, f64)>> {
    if weights.is_empty() {
        return Err(Error::config("global ranking needs at least one weight vector"));
    }
    let scaled: BTreeMap<String, MetricTable> = tables
        .iter()
        .map(|(d, t)| Ok((d.clone(), scale_metrics(t)?.0)))
        .collect::<Result<_>>()?;
    let per_weight: Vec<BTreeMap<String, f64>> = weights
        .par_iter()
        .map(|w| {
            let ranks = scaled.iter().map(|(d, t)| (d.clone(), local_ranking(t, w))).collect();
            average_local_ranking(&ranks)
        })
        .collect::<Result<_>>()?;
    let mut total: BTreeMap<String, f64> = BTreeMap::new();
    for r in &per_weight {
        for (m, v) in r {
            *total.entry(m.clone()).or_default() += v;
        }
    }
    let mut out: Vec<(String, f64)> = total.into_iter().map(|(m, s)| (m, s / weights.len() as f64)).collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(out)
}

fn write_table<W: Write>(w: W, table: &MetricTable) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["model"];
    header.extend(METRIC_NAMES);
    out.write_record(&header)?;
    for (m, v) in table {
        let mut rec = vec![m.clone()];
        rec.extend(v.iter().map(|x| x.to_string()));
        out.write_record(&rec)?;
    }
    out.flush().map_err(|e| Error::io("<metrics>", e))?;
    Ok(())
}

/// Reads a table written by [`DatasetReport::write`].
pub fn read_metrics(path: &Path) -> Result<MetricTable> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(f);
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header.len() != 8 || header[1..] != METRIC_NAMES {
        return Err(Error::Parse(format!(
            "{}: unexpected header {header:?}",
            path.display()
        )));
    }
    let mut table = MetricTable::new();
    for rec in r.records() {
        let rec = rec?;
        let mut v = [0.0; 7];
        for (i, x) in v.iter_mut().enumerate() {
            *x = rec[i + 1]
                .parse()
                .map_err(|_| Error::Parse(format!("{}: bad number {:?}", path.display(), &rec[i + 1])))?;
        }
        table.insert(rec[0].to_string(), v);
    }
    Ok(table)
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

/// Per-dataset report: raw and scaled metric matrices, costs and ranking
/// under `weights`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub metrics: MetricTable,
    pub scaled: MetricTable,
    pub zero_columns: Vec<String>,
    pub costs: BTreeMap<String, f64>,
    pub ranking: BTreeMap<String, usize>,
}

impl DatasetReport {
    pub fn new(metrics: MetricTable, weights: &WeightVector) -> Result<Self> {
        let (scaled, zero) = scale_metrics(&metrics)?;
        let costs: BTreeMap<String, f64> = scaled.iter().map(|(k, m)| (k.clone(), cost(m, weights))).collect();
        let ranking = rank_models(&costs);
        Ok(Self {
            metrics,
            scaled,
            zero_columns: zero.iter().map(|&i| METRIC_NAMES[i].to_string()).collect(),
            costs,
            ranking,
        })
    }

    /// Writes `metrics.csv`, `metrics_scaled.csv`, `costs.csv` and
    /// `ranking.csv` into `dir`; returns the file names.
    pub fn write(&self, dir: &Path) -> Result<Vec<String>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_table(create(&dir.join("metrics.csv"))?, &self.metrics)?;
        write_table(create(&dir.join("metrics_scaled.csv"))?, &self.scaled)?;
        let mut c = csv::Writer::from_writer(create(&dir.join("costs.csv"))?);
        c.write_record(["model", "cost"])?;
        for (m, v) in &self.costs {
            c.write_record([m.clone(), v.to_string()])?;
        }
        c.flush().map_err(|e| Error::io(dir, e))?;
        let mut r = csv::Writer::from_writer(create(&dir.join("ranking.csv"))?);
        r.write_record(["model", "rank", "cost"])?;
        let mut order: Vec<(&String, &usize)> = self.ranking.iter().collect();
        order.sort_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(b.0)));
        for (m, k) in order {
            r.write_record([m.clone(), k.to_string(), self.costs[m].to_string()])?;
        }
        r.flush().map_err(|e| Error::io(dir, e))?;
        Ok(["metrics.csv", "metrics_scaled.csv", "costs.csv", "ranking.csv"]
            .iter()
            .map(|s| s.to_string())
            .collect())
    }
}

pub fn write_global_ranking(path: &Path, ranking: &[(String, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["position", "model", "mean_rank"])?;
    for (i, (m, v)) in ranking.iter().enumerate() {
        w.write_record([(i + 1).to_string(), m.clone(), v.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn costs(v: &[(&str, f64)]) -> BTreeMap<String, f64> {
        v.iter().map(|(k, c)| (k.to_string(), *c)).collect()
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(rmse(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(rmse(&[0.0, 0.0], &[0.0, 2.0]).unwrap(), 2f64.sqrt());
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn scaling_divides_by_column_max() {
        let t: MetricTable = [
            ("a".to_string(), [2.0; 7]),
            ("b".to_string(), [4.0, 4.0, 4.0, 4.0, 4.0, 4.0, 0.0]),
        ]
        .into_iter()
        .collect();
        let (s, zero) = scale_metrics(&t).unwrap();
        assert_eq!(s["a"][0], 0.5);
        assert_eq!(s["b"][0], 1.0);
        assert_eq!(s["a"][6], 1.0);
        assert!(zero.is_empty());
        let single: MetricTable = [("a".to_string(), [3.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0])]
            .into_iter()
            .collect();
        let (s, zero) = scale_metrics(&single).unwrap();
        assert_eq!(s["a"], [1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(zero, vec![1]);
    }

    #[test]
    fn cost_examples() {
        assert!((cost(&[1.0; 7], &DEFAULT_WEIGHTS) - 1.0).abs() < 1e-15);
        let mut unit = [0.0; 7];
        unit[5] = 1.0;
        assert_eq!(cost(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7], &unit), 0.6);
        assert_eq!(cost(&[0.0; 7], &DEFAULT_WEIGHTS), 0.0);
    }

    #[test]
    fn dense_ranks() {
        let r = rank_models(&costs(&[("A", 0.2), ("B", 0.5)]));
        assert_eq!((r["A"], r["B"]), (1, 2));
        let r = rank_models(&costs(&[("A", 0.2), ("B", 0.2), ("C", 0.9)]));
        assert_eq!((r["A"], r["B"], r["C"]), (1, 1, 2));
    }

    #[test]
    fn average_ranks_and_missing_cells() {
        let mut all = BTreeMap::new();
        all.insert(
            "d1".to_string(),
            [("m".to_string(), 1)].into_iter().collect::<BTreeMap<_, _>>(),
        );
        all.insert("d2".to_string(), [("m".to_string(), 3)].into_iter().collect());
        assert_eq!(average_local_ranking(&all).unwrap()["m"], 2.0);
        all.insert("d3".to_string(), [("x".to_string(), 1)].into_iter().collect());
        assert!(matches!(average_local_ranking(&all), Err(Error::MissingCell { .. })));
    }

    #[test]
    fn weight_samples_respect_bounds() {
        let w = sample_weight_vectors(&DEFAULT_WEIGHT_BOUNDS, 500, 1).unwrap();
        assert_eq!(w.len(), 500);
        assert!(w.iter().all(|v| (0.1..=0.2).contains(&v[0])));
        let mut fixed = DEFAULT_WEIGHT_BOUNDS;
        fixed[2] = (0.07, 0.07);
        assert!(sample_weight_vectors(&fixed, 10, 1)
            .unwrap()
            .iter()
            .all(|v| v[2] == 0.07));
    }
}
