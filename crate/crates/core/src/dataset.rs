//! Tabular committer-probability datasets built from FFS forests.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ffs::CrossingForest;
use crate::rng;

/// Tolerance used when matching a value against a discrete set.
const DISCRETE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Discrete { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
    #[serde(default)]
    pub unit: String,
}

impl ColumnMeta {
    pub fn continuous(name: impl Into<String>, unit: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Continuous,
            unit: unit.into(),
        }
    }

    pub fn discrete(name: impl Into<String>, values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        v.dedup();
        Self {
            name: name.into(),
            kind: ColumnKind::Discrete { values: v },
            unit: String::new(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, ColumnKind::Discrete { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub process: String,
    pub response_action: String,
}

/// Row-major table of `(p_B, X_1 .. X_d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    pub columns: Vec<ColumnMeta>,
    pub features: Vec<Vec<f64>>,
    pub target: Vec<f64>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Schema {
    columns: Vec<ColumnMeta>,
    provenance: Provenance,
}

impl TabularDataset {
    pub fn new(
        columns: Vec<ColumnMeta>,
        features: Vec<Vec<f64>>,
        target: Vec<f64>,
        provenance: Provenance,
    ) -> Result<Self> {
        let d = Self {
            columns,
            features,
            target,
            provenance,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.len() != self.target.len() {
            return Err(Error::DimensionMismatch {
                expected: self.target.len(),
                got: self.features.len(),
            });
        }
        for (i, (row, &p)) in self.features.iter().zip(&self.target).enumerate() {
            if row.len() != self.columns.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.columns.len(),
                    got: row.len(),
                });
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain(format!("row {i}: p_B = {p} outside [0, 1]")));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("row {i}: non-finite feature")));
            }
            for (c, &v) in self.columns.iter().zip(row) {
                if let ColumnKind::Discrete { values } = &c.kind {
                    category_index(values, v).ok_or_else(|| Error::UnknownCategory {
                        column: c.name.clone(),
                        value: v,
                    })?;
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn subset(&self, rows: &[usize]) -> TabularDataset {
        TabularDataset {
            columns: self.columns.clone(),
            features: rows.iter().map(|&r| self.features[r].clone()).collect(),
            target: rows.iter().map(|&r| self.target[r]).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Writes `p_B,<features>` with full-precision values.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["p_B".to_string()];
        header.extend(self.feature_names());
        out.write_record(&header)?;
        for (row, p) in self.features.iter().zip(&self.target) {
            let mut rec = vec![p.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
        out.flush().map_err(|e| Error::io("<dataset>", e))?;
        Ok(())
    }

    pub fn schema_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Schema {
            columns: self.columns.clone(),
            provenance: self.provenance.clone(),
        })?)
    }

    /// Reads a dataset CSV using the column metadata from its schema JSON.
    pub fn read_csv<R: Read>(r: R, schema_json: &str) -> Result<Self> {
        let schema: Schema = serde_json::from_str(schema_json)?;
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        let expected: Vec<&str> = std::iter::once("p_B")
            .chain(schema.columns.iter().map(|c| c.name.as_str()))
            .collect();
        if header.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Parse(format!(
                "dataset header {:?} does not match schema {:?}",
                header, expected
            )));
        }
        let mut features = Vec::new();
        let mut target = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            target.push(vals[0]);
            features.push(vals[1..].to_vec());
        }
        Self::new(schema.columns, features, target, schema.provenance)
    }

    /// Saves `<stem>.csv` and `<stem>.schema.json` in `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let f = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        self.write_csv(std::io::BufWriter::new(f))?;
        let schema_path = dir.join(format!("{stem}.schema.json"));
        std::fs::write(&schema_path, self.schema_json()?).map_err(|e| Error::io(&schema_path, e))
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let schema_path = dir.join(format!("{stem}.schema.json"));
        let schema = std::fs::read_to_string(&schema_path).map_err(|e| Error::io(&schema_path, e))?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let f = std::fs::File::open(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        Self::read_csv(f, &schema)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Factor `c_i` per interface; interfaces beyond the list use `default_c`.
    #[serde(default)]
    pub factors: Vec<f64>,
    #[serde(default = "default_c")]
    pub default_c: f64,
}

fn default_c() -> f64 {
    2.0
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            factors: Vec::new(),
            default_c: default_c(),
        }
    }
}

impl FilterConfig {
    pub fn factor(&self, interface: usize) -> f64 {
        self.factors.get(interface).copied().unwrap_or(self.default_c)
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .factors
            .iter()
            .chain([&self.default_c])
            .any(|&c| c.is_nan() || c <= 0.0)
        {
            return Err(Error::config("filter factors c_i must be > 0"));
        }
        Ok(())
    }
}

/// Keep mask for one group: `mean - c*sigma <= p <= mean + c*sigma` with the
/// population standard deviation. Groups of one row, and groups with zero
/// spread, are kept whole.
pub fn filter_group(p: &[f64], c: f64) -> Vec<bool> {
    if p.len() <= 1 {
        return vec![true; p.len()];
    }
    let n = p.len() as f64;
    let mean = p.iter().sum::<f64>() / n;
    let sigma = (p.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sigma == 0.0 || c.is_infinite() {
        return vec![true; p.len()];
    }
    p.iter().map(|&v| within_band(v, mean, sigma, c)).collect()
}

/// `mean - c*sigma <= p <= mean + c*sigma`
pub fn within_band(p: f64, mean: f64, sigma: f64, c: f64) -> bool {
    mean - c * sigma <= p && p <= mean + c * sigma
}

/// Applies the per-interface filter to every forest. Rows are grouped by
/// (interface index, response-action value). Returns the kept record ids
/// per forest, in id order.
pub fn filter_by_interface(forests: &[CrossingForest], config: &FilterConfig) -> Result<Vec<Vec<usize>>> {
    config.validate()?;
    type Key = (usize, u64);
    let mut groups: BTreeMap<Key, Vec<(usize, usize, f64)>> = BTreeMap::new();
    for (fi, f) in forests.iter().enumerate() {
        for r in &f.records {
            let p = r
                .p_b
                .ok_or_else(|| Error::config("committer probabilities have not been computed"))?;
            groups
                .entry((r.interface, r.response_value.to_bits()))
                .or_default()
                .push((fi, r.id, p));
        }
    }
    let mut keep = vec![Vec::new(); forests.len()];
    for ((interface, _), rows) in groups {
        let p: Vec<f64> = rows.iter().map(|r| r.2).collect();
        for (row, k) in rows.iter().zip(filter_group(&p, config.factor(interface))) {
            if k {
                keep[row.0].push(row.1);
            }
        }
    }
    for k in &mut keep {
        k.sort_unstable();
    }
    Ok(keep)
}

/// Which saved state variables become features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    pub state_features: Vec<String>,
    pub response_action: String,
    /// Admissible response-action values.
    pub response_values: Vec<f64>,
}

impl FeatureSelection {
    pub fn columns(&self, units: &BTreeMap<String, String>) -> Vec<ColumnMeta> {
        let mut cols: Vec<ColumnMeta> = self
            .state_features
            .iter()
            .map(|n| ColumnMeta::continuous(n.clone(), units.get(n).cloned().unwrap_or_default()))
            .collect();
        cols.push(ColumnMeta::discrete(
            self.response_action.clone(),
            &self.response_values,
        ));
        cols
    }
}

/// Builds one row per kept crossing: the selected state variables followed
/// by the response-action value, with `p_B` as target.
pub fn assemble(
    forests: &[CrossingForest],
    keep: &[Vec<usize>],
    state_names: &[String],
    selection: &FeatureSelection,
    units: &BTreeMap<String, String>,
    process: &str,
) -> Result<TabularDataset> {
    let idx = selection
        .state_features
        .iter()
        .map(|name| {
            state_names
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| Error::config(format!("unknown state feature {name:?}; have {state_names:?}")))
        })
        .collect::<Result<Vec<usize>>>()?;
    let mut features = Vec::new();
    let mut target = Vec::new();
    for (f, ids) in forests.iter().zip(keep) {
        for &id in ids {
            let r = &f.records[id];
            let mut row: Vec<f64> = idx.iter().map(|&i| r.state.x[i]).collect();
            row.push(r.response_value);
            features.push(row);
            target.push(r.p_b.unwrap_or(0.0));
        }
    }
    if target.is_empty() {
        return Err(Error::EmptyDataset("no crossings to assemble".into()));
    }
    TabularDataset::new(
        selection.columns(units),
        features,
        target,
        Provenance {
            process: process.to_string(),
            response_action: selection.response_action.clone(),
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_train_fraction() -> f64 {
    0.7
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: default_train_fraction(),
            seed: 0,
        }
    }
}

/// Shuffled partition with `round(fraction * N)` training rows, kept within
/// `[1, N - 1]`. Returns the row indices of (train, test).
pub fn split_indices(n: usize, config: &SplitConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(Error::config("train fraction must lie in (0, 1)"));
    }
    if n < 2 {
        return Err(Error::EmptyDataset(format!("cannot split {n} rows")));
    }
    let n_train = ((config.train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(config.seed, &[rng::label("split")]));
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

pub fn train_test_split(data: &TabularDataset, config: &SplitConfig) -> Result<(TabularDataset, TabularDataset)> {
    let (train, test) = split_indices(data.len(), config)?;
    Ok((data.subset(&train), data.subset(&test)))
}

/// Per-column standardization fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Scaler {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::EmptyDataset("cannot fit a scaler on zero rows".into()))?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut means = vec![0.0; d];
        for r in rows {
            for (m, v) in means.iter_mut().zip(r) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut stds = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in stds.iter_mut().zip(r).zip(&means) {
                *s += (v - m).powi(2);
            }
        }
        stds.iter_mut().for_each(|s| *s = (*s / n).sqrt());
        Ok(Self { means, stds })
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&v, (&m, &s))| if s > 0.0 { (v - m) / s } else { v })
            .collect()
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.transform_row(r)).collect()
    }
}

/// Position of `v` in the sorted admissible set.
pub fn category_index(values: &[f64], v: f64) -> Option<usize> {
    values
        .iter()
        .position(|&a| (a - v).abs() <= DISCRETE_TOL * a.abs().max(1.0))
}

/// Maps each value to its rank in the sorted admissible set.
pub fn encode_discrete(column: &[f64], admissible: &[f64], name: &str) -> Result<Vec<usize>> {
    let mut sorted = admissible.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    column
        .iter()
        .map(|&v| {
            category_index(&sorted, v).ok_or_else(|| Error::UnknownCategory {
                column: name.to_string(),
                value: v,
            })
        })
        .collect()
}

/// Feature transform applied before a model sees a row: discrete columns
/// become integer codes, then an optional standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub columns: Vec<ColumnMeta>,
    pub scaler: Option<Scaler>,
}

impl Preprocessor {
    pub fn fit(data: &TabularDataset, scale: bool) -> Result<Self> {
        let mut p = Self {
            columns: data.columns.clone(),
            scaler: None,
        };
        if scale {
            let encoded = p.encode(&data.features)?;
            p.scaler = Some(Scaler::fit(&encoded)?);
        }
        Ok(p)
    }

    fn encode_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.columns.len() {
            return Err(Error::DimensionMismatch {
                expected: self.columns.len(),
                got: row.len(),
            });
        }
        row.iter()
            .zip(&self.columns)
            .map(|(&v, c)| match &c.kind {
                ColumnKind::Continuous => Ok(v),
                ColumnKind::Discrete { values } => {
                    category_index(values, v)
                        .map(|i| i as f64)
                        .ok_or_else(|| Error::UnknownCategory {
                            column: c.name.clone(),
                            value: v,
                        })
                }
            })
            .collect()
    }

    fn encode(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.encode_row(r)).collect()
    }

    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        let e = self.encode_row(row)?;
        Ok(match &self.scaler {
            Some(s) => s.transform_row(&e),
            None => e,
        })
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.transform_row(r)).collect()
    }
}
