//! Declarative run configuration, read from TOML.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::alarm::AlarmSpec;
use crate::benchmark::{self, WeightVector};
use crate::dataset::FilterConfig;
use crate::error::{Error, Result};
use crate::ffs::{BranchConfig, FluxConfig, InterfaceLadder};
use crate::models::ModelParams;
use crate::process::{NoiseSpec, ProcessModel};
use crate::tuning::{self, HyperparamSpace, Sampler};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub process: ProcessConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub search: SearchSection,
    #[serde(default)]
    pub alarm: AlarmSpec,
    #[serde(default)]
    pub deployment: DeploymentSection,
    #[serde(default)]
    pub weights: WeightsConfig,
    #[serde(default)]
    pub datasets: Vec<DatasetConfig>,
    #[serde(default)]
    pub models: Vec<ModelConfig>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessConfig {
    pub dt: f64,
    /// Noise-free settling time before any sampling starts.
    #[serde(default)]
    pub warmup: f64,
    pub noise: NoiseSpec,
    pub model: ProcessModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub t_sim: f64,
    #[serde(default)]
    pub stop_on_basin: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            t_sim: 1000.0,
            stop_on_basin: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub train_fraction: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self { train_fraction: 0.7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSection {
    pub budget: usize,
    pub sampler: Sampler,
    pub k: usize,
    pub grid_points: usize,
}

impl Default for SearchSection {
    fn default() -> Self {
        Self {
            budget: 30,
            sampler: Sampler::Random,
            k: 3,
            grid_points: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeploymentSection {
    pub n_sim: usize,
    pub t_sim: f64,
    pub call_freq: usize,
}

impl Default for DeploymentSection {
    fn default() -> Self {
        Self {
            n_sim: 50,
            t_sim: 30_000.0,
            call_freq: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightsConfig {
    /// Weights for the per-dataset cost and ranking.
    pub a: WeightVector,
    pub bounds: [(f64, f64); 7],
    /// Weight vectors drawn for the global ranking.
    pub samples: usize,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        Self {
            a: benchmark::DEFAULT_WEIGHTS,
            bounds: benchmark::DEFAULT_WEIGHT_BOUNDS,
            samples: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum LadderConfig {
    Explicit { lambdas: Vec<f64> },
    Uniform { from: f64, to: f64, n: usize },
}

impl LadderConfig {
    pub fn build(&self) -> Result<InterfaceLadder> {
        match self {
            LadderConfig::Explicit { lambdas } => InterfaceLadder::new(lambdas.clone()),
            LadderConfig::Uniform { from, to, n } => InterfaceLadder::uniform(*from, *to, *n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSection {
    /// Same branch count at every interface.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Branch counts `m_0..m_{n-1}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_interface: Option<Vec<usize>>,
    pub n_seeds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_branch_steps: Option<u64>,
}

impl BranchSection {
    pub fn build(&self, ladder: &InterfaceLadder) -> Result<BranchConfig> {
        let mut cfg = match (&self.m, &self.per_interface) {
            (Some(m), None) => BranchConfig::uniform(*m, ladder.n(), self.n_seeds),
            (None, Some(v)) => BranchConfig {
                branches: v.clone(),
                ..BranchConfig::uniform(1, ladder.n(), self.n_seeds)
            },
            _ => return Err(Error::config("branches: set exactly one of `m` or `per_interface`")),
        };
        if let Some(s) = self.max_branch_steps {
            cfg.max_branch_steps = s;
        }
        cfg.validate(ladder)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub response_action: String,
    /// Response-action values swept during sampling.
    pub values: Vec<f64>,
    /// Response-action value held during deployment simulations.
    pub deploy_value: f64,
    pub state_features: Vec<String>,
    pub ladder: LadderConfig,
    pub branches: BranchSection,
    #[serde(default)]
    pub flux: FluxConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub params: Map<String, Value>,
    /// Search space; the family default when absent, no search when empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<HyperparamSpace>,
}

impl ModelConfig {
    pub fn base_params(&self) -> Result<ModelParams> {
        let p = ModelParams::default_for(&self.kind)?
            .with_overrides(&self.params)
            .map_err(|e| Error::config(format!("model {:?}: {e}", self.name)))?;
        p.validate()?;
        Ok(p)
    }

    pub fn search_space(&self) -> HyperparamSpace {
        self.space.clone().unwrap_or_else(|| tuning::default_space(&self.kind))
    }
}

fn unique<'a>(what: &str, names: impl Iterator<Item = &'a String>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for n in names {
        if n.is_empty() || n.contains(['/', '\\']) {
            return Err(Error::config(format!("invalid {what} name {n:?}")));
        }
        if !seen.insert(n) {
            return Err(Error::config(format!("duplicate {what} name {n:?}")));
        }
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.process;
        if !(p.dt > 0.0) || !(p.warmup >= 0.0) {
            return Err(Error::config("process: need dt > 0 and warmup >= 0"));
        }
        p.noise.validate()?;
        p.model.validate()?;
        if !(self.simulate.t_sim >= p.dt) {
            return Err(Error::config("simulate: t_sim must be >= dt"));
        }
        self.filter.validate()?;
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return Err(Error::config("split: train_fraction must lie in (0, 1)"));
        }
        if self.search.budget < 1 || self.search.k < 2 || self.search.grid_points < 1 {
            return Err(Error::config("search: need budget >= 1, k >= 2, grid_points >= 1"));
        }
        self.alarm.validate()?;
        let d = &self.deployment;
        if d.n_sim < 1 || d.call_freq < 1 || !(d.t_sim >= p.dt) {
            return Err(Error::config(
                "deployment: need n_sim >= 1, call_freq >= 1, t_sim >= dt",
            ));
        }
        benchmark::validate_bounds(&self.weights.bounds)?;
        if self.weights.samples < 1 || self.weights.a.iter().any(|&a| !(a >= 0.0)) {
            return Err(Error::config("weights: need samples >= 1 and non-negative `a`"));
        }
        unique("dataset", self.datasets.iter().map(|d| &d.name))?;
        let names: Vec<&str> = p.model.state_names().to_vec();
        for ds in &self.datasets {
            let ctx = |e: Error| Error::config(format!("dataset {:?}: {e}", ds.name));
            if ds.values.is_empty() {
                return Err(ctx(Error::config("`values` is empty")));
            }
            for &v in ds.values.iter().chain([&ds.deploy_value]) {
                p.model.with_response_action(&ds.response_action, v).map_err(ctx)?;
            }
            if !ds.values.iter().any(|&v| (v - ds.deploy_value).abs() <= 1e-9) {
                return Err(ctx(Error::config("`deploy_value` must be one of `values`")));
            }
            if let Some(f) = ds.state_features.iter().find(|f| !names.contains(&f.as_str())) {
                return Err(ctx(Error::config(format!(
                    "unknown state feature {f:?}; have {names:?}"
                ))));
            }
            let ladder = ds.ladder.build().map_err(ctx)?;
            ds.branches.build(&ladder).map_err(ctx)?;
        }
        unique("model", self.models.iter().map(|m| &m.name))?;
        for m in &self.models {
            m.base_params()?;
            let space = m.search_space();
            let probe = crate::tuning::SearchConfig {
                budget: 1,
                ..Default::default()
            };
            tuning::candidates(&space, &probe).map_err(|e| Error::config(format!("model {:?}: {e}", m.name)))?;
        }
        Ok(())
    }

    pub fn require_datasets(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::config(
                "missing key `datasets`: at least one [[datasets]] entry is required",
            ));
        }
        Ok(())
    }

    pub fn require_models(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::config(
                "missing key `models`: at least one [[models]] entry is required",
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 7

[process]
dt = 0.1
noise = { variance = 0.02 }
model = { kind = "exothermic", tau = 0.53 }

[[datasets]]
name = "I"
response_action = "tau"
values = [0.53, 0.54]
deploy_value = 0.53
state_features = ["C_A", "T", "T_C"]
ladder = { from = 835.0, to = 745.0, n = 5 }
branches = { m = 10, n_seeds = 4 }

[[models]]
name = "tree"
kind = "decision_tree"
params = { max_depth = 4 }
"#;

    #[test]
    fn parses_and_round_trips() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.datasets[0].ladder.build().unwrap().n(), 5);
        assert_eq!(c.deployment.call_freq, 200);
        let again = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn missing_key_is_named() {
        let text = MINIMAL.replace("seed = 7", "");
        let e = RunConfig::from_toml(&text).unwrap_err();
        assert!(e.is_config());
        assert!(e.to_string().contains("seed"), "{e}");
    }

    #[test]
    fn bad_sections_are_config_errors() {
        for (from, to) in [
            ("n = 5", "n = 0"),
            ("deploy_value = 0.53", "deploy_value = 0.6"),
            ("\"T_C\"]", "\"T_J\"]"),
            ("max_depth = 4", "depth = 4"),
            ("kind = \"decision_tree\"", "kind = \"svm\""),
        ] {
            let e = RunConfig::from_toml(&MINIMAL.replace(from, to)).unwrap_err();
            assert!(e.is_config(), "{from} -> {to}: {e}");
        }
    }
}
