//! End-to-end orchestration: simulate, sample, assemble, tune, benchmark
//! and rank, with every stage seeded from one master seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alarm::{run_deployment, AlarmMetrics, DeploymentConfig, FeatureMap, Plant};
use crate::benchmark::{self, DatasetReport, MetricTable, MetricVector};
use crate::config::{DatasetConfig, ModelConfig, RunConfig};
use crate::dataset::{self, FeatureSelection, SplitConfig, TabularDataset};
use crate::error::{Error, Result};
use crate::ffs::{run_bgffs, CrossingForest, FfsResult, FfsSummary};
use crate::models::{self, ModelParams, Predictor, RegressorHandle};
use crate::process::{self, NoiseSpec, ProcessModel, ProcessState, SimConfig, Simulator};
use crate::rng::{self, label};
use crate::tuning::{self, SearchConfig, SearchOutcome};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Integrates `model` without noise for `warmup` time units from its
/// published initial condition; the clock is reset to zero.
pub fn settle(model: &ProcessModel, dt: f64, warmup: f64) -> Result<ProcessState> {
    let quiet = Simulator::new(model.clone(), NoiseSpec::silent(), dt)?;
    let mut r = rng::stream(0, &[]);
    let mut s = model.initial_state();
    for _ in 0..(warmup / dt).round() as usize {
        s = quiet.step_with(&s, &mut r)?;
    }
    s.t = 0.0;
    Ok(s)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn list_files(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            list_files(root, &path, out)?;
        } else {
            let rel = path
                .strip_prefix(root)
                .unwrap_or(&path)
                .to_string_lossy()
                .replace('\\', "/");
            if rel != "manifest.json" {
                let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
                out.insert(rel, sha256_hex(&bytes));
            }
        }
    }
    Ok(())
}

/// Raw timings of one benchmarked model, seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub t_hyper: f64,
    pub t_train: f64,
    pub t_test: f64,
    pub t_deploy: f64,
}

/// Written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    /// Relative path to SHA-256 of every file under the output directory.
    pub files: BTreeMap<String, String>,
    /// Per dataset and model, the seeds of the deployment simulations.
    pub deployment_seeds: BTreeMap<String, BTreeMap<String, Vec<u64>>>,
    pub timings: BTreeMap<String, BTreeMap<String, Timings>>,
    pub failures: BTreeMap<String, BTreeMap<String, String>>,
    pub warnings: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct FfsCache {
    key: String,
    summaries: Vec<FfsSummary>,
    forests: Vec<CrossingForest>,
}

/// A benchmarked model on one dataset.
#[derive(Debug, Clone)]
pub struct ModelRun {
    pub metrics: MetricVector,
    pub alarms: AlarmMetrics,
    pub timings: Timings,
    pub handle: RegressorHandle,
}

/// Outputs of `bench`.
#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub reports: BTreeMap<String, DatasetReport>,
    pub global: Vec<(String, f64)>,
    pub manifest: Manifest,
}

pub struct Pipeline {
    pub config: RunConfig,
    pub output: PathBuf,
    config_hash: String,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let config_hash = sha256_hex(serde_json::to_string(&config)?.as_bytes());
        Ok(Self {
            output: config.output.clone(),
            config,
            config_hash,
        })
    }

    pub fn with_output(mut self, dir: impl Into<PathBuf>) -> Self {
        self.output = dir.into();
        self
    }

    fn seed(&self, path: &[u64]) -> u64 {
        rng::derive_seed(self.config.seed, path)
    }

    fn manifest(&self, command: &str) -> Manifest {
        Manifest {
            command: command.to_string(),
            version: VERSION.to_string(),
            seed: self.config.seed,
            config_hash: self.config_hash.clone(),
            ..Default::default()
        }
    }

    fn finish(&self, mut manifest: Manifest) -> Result<Manifest> {
        std::fs::create_dir_all(&self.output).map_err(|e| Error::io(&self.output, e))?;
        list_files(&self.output, &self.output, &mut manifest.files)?;
        write_json(&self.output.join("manifest.json"), &manifest)?;
        Ok(manifest)
    }

    fn state_names(&self) -> Vec<String> {
        self.config
            .process
            .model
            .state_names()
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn dataset_config(&self, name: &str) -> Result<&DatasetConfig> {
        self.config
            .datasets
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::config(format!("no dataset named {name:?}")))
    }

    /// Noisy trajectory from the published initial condition.
    pub fn simulate(&self) -> Result<Manifest> {
        let p = &self.config.process;
        let s = &self.config.simulate;
        let stop = match (s.stop_on_basin, self.config.datasets.first()) {
            (true, Some(d)) => Some(d.ladder.build()?.basins()),
            (true, None) => return Err(Error::config("simulate.stop_on_basin needs a [[datasets]] ladder")),
            _ => None,
        };
        let cfg = SimConfig {
            dt: p.dt,
            t_sim: s.t_sim,
            seed: self.seed(&[label("simulate")]),
            stop_on_basin: stop,
        };
        let traj = process::simulate(&p.model.initial_state(), &p.model, p.noise, &cfg)?;
        std::fs::create_dir_all(&self.output).map_err(|e| Error::io(&self.output, e))?;
        traj.save_csv(&self.output.join("trajectory.csv"))?;
        self.finish(self.manifest("simulate"))
    }

    fn ffs_key(&self, ds: &DatasetConfig) -> Result<String> {
        let inputs = serde_json::json!({
            "version": VERSION,
            "seed": self.config.seed,
            "process": self.config.process,
            "dataset": ds,
        });
        Ok(sha256_hex(serde_json::to_string(&inputs)?.as_bytes()))
    }

    /// Sampling for every response-action value of one dataset. Results are
    /// cached under `ffs/<name>/` and reused while the inputs are unchanged.
    pub fn ffs_dataset(&self, name: &str) -> Result<Vec<FfsResult>> {
        let ds = self.dataset_config(name)?;
        let dir = self.output.join("ffs").join(&ds.name);
        let cache_path = dir.join("forests.json");
        let key = self.ffs_key(ds)?;
        if let Ok(text) = std::fs::read_to_string(&cache_path) {
            if let Ok(cache) = serde_json::from_str::<FfsCache>(&text) {
                if cache.key == key {
                    info!("reusing sampled forests for dataset {name}");
                    return Ok(cache
                        .summaries
                        .into_iter()
                        .zip(cache.forests)
                        .map(|(summary, forest)| FfsResult { summary, forest })
                        .collect());
                }
            }
        }
        let p = &self.config.process;
        let ladder = ds.ladder.build()?;
        let branches = ds.branches.build(&ladder)?;
        let mut results = Vec::with_capacity(ds.values.len());
        for (i, &v) in ds.values.iter().enumerate() {
            let ctx = |e: Error| e.context(format!("dataset {:?}, {} = {v}", ds.name, ds.response_action));
            let model = p.model.with_response_action(&ds.response_action, v).map_err(ctx)?;
            let sim = Simulator::new(model.clone(), p.noise, p.dt).map_err(ctx)?;
            let initial = settle(&model, p.dt, p.warmup).map_err(ctx)?;
            let seed = self.seed(&[label("ffs"), label(&ds.name), i as u64]);
            let t0 = Instant::now();
            let r = run_bgffs(
                &sim,
                &initial,
                &ladder,
                &branches,
                &ds.flux,
                seed,
                (&ds.response_action, v),
            )
            .map_err(ctx)?;
            info!(
                "dataset {} {}={v}: crossings {:?}, p = {:.3e} ({:.1} s)",
                ds.name,
                ds.response_action,
                r.summary.crossings_per_interface,
                r.p_mean(),
                t0.elapsed().as_secs_f64()
            );
            results.push(r);
        }
        let names = self.state_names();
        let all = CrossingForest::concat(results.iter().map(|r| r.forest.clone()))?;
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        all.save_csv(&dir.join("forest.csv"), &names, &ds.response_action)?;
        let summaries: Vec<FfsSummary> = results.iter().map(|r| r.summary.clone()).collect();
        write_json(&dir.join("summaries.json"), &summaries)?;
        write_json(
            &cache_path,
            &FfsCache {
                key,
                summaries,
                forests: results.iter().map(|r| r.forest.clone()).collect(),
            },
        )?;
        Ok(results)
    }

    pub fn ffs(&self) -> Result<Manifest> {
        self.config.require_datasets()?;
        for ds in &self.config.datasets {
            self.ffs_dataset(&ds.name)?;
        }
        self.finish(self.manifest("ffs"))
    }

    /// Filtered, assembled and split data for one dataset; written under
    /// `datasets/<name>/`. Returns (train, test).
    pub fn dataset_split(&self, name: &str) -> Result<(TabularDataset, TabularDataset)> {
        let ds = self.dataset_config(name)?;
        let results = self.ffs_dataset(name)?;
        let forests: Vec<CrossingForest> = results.into_iter().map(|r| r.forest).collect();
        let keep = dataset::filter_by_interface(&forests, &self.config.filter)?;
        let selection = FeatureSelection {
            state_features: ds.state_features.clone(),
            response_action: ds.response_action.clone(),
            response_values: ds.values.clone(),
        };
        let data = dataset::assemble(
            &forests,
            &keep,
            &self.state_names(),
            &selection,
            &units(&self.config.process.model),
            self.config.process.model.name(),
        )
        .map_err(|e| e.context(format!("dataset {name:?}")))?;
        let split = SplitConfig {
            train_fraction: self.config.split.train_fraction,
            seed: self.seed(&[label("split"), label(name)]),
        };
        let (train, test) = dataset::train_test_split(&data, &split)?;
        let dir = self.output.join("datasets").join(name);
        data.save(&dir, "data")?;
        train.save(&dir, "train")?;
        test.save(&dir, "test")?;
        Ok((train, test))
    }

    pub fn dataset(&self) -> Result<Manifest> {
        self.config.require_datasets()?;
        for ds in &self.config.datasets {
            self.dataset_split(&ds.name)?;
        }
        self.finish(self.manifest("dataset"))
    }

    fn base_params(&self, dataset: &str, m: &ModelConfig) -> Result<ModelParams> {
        Ok(m.base_params()?
            .with_seed(self.seed(&[label("model"), label(dataset), label(&m.name)])))
    }

    /// Hyperparameter search for one model; `None` when its space is empty.
    fn tune_model(
        &self,
        dataset: &str,
        m: &ModelConfig,
        train: &TabularDataset,
    ) -> Result<(ModelParams, Option<SearchOutcome>)> {
        let base = self.base_params(dataset, m)?;
        let space = m.search_space();
        if space.is_empty() {
            return Ok((base, None));
        }
        let s = &self.config.search;
        let cfg = SearchConfig {
            budget: s.budget,
            sampler: s.sampler,
            k: s.k,
            seed: self.seed(&[label("search"), label(dataset), label(&m.name)]),
            grid_points: s.grid_points,
        };
        let outcome = tuning::search(&base, &space, train, &cfg)?;
        let dir = self.output.join("tune").join(dataset).join(&m.name);
        outcome.write_trials(create(&dir.join("trials.csv"))?)?;
        write_json(&dir.join("best_params.json"), &outcome.best)?;
        Ok((outcome.best.clone(), Some(outcome)))
    }

    pub fn tune(&self) -> Result<Manifest> {
        self.config.require_datasets()?;
        self.config.require_models()?;
        let mut manifest = self.manifest("tune");
        for ds in &self.config.datasets {
            let (train, _) = self.dataset_split(&ds.name)?;
            for m in &self.config.models {
                if let Err(e) = self.tune_model(&ds.name, m, &train) {
                    warn!("tuning {} on {} failed: {e}", m.name, ds.name);
                    manifest
                        .failures
                        .entry(ds.name.clone())
                        .or_default()
                        .insert(m.name.clone(), e.to_string());
                }
            }
        }
        self.finish(manifest)
    }

    fn deployment(&self, ds: &DatasetConfig) -> DeploymentConfig {
        let d = &self.config.deployment;
        DeploymentConfig::with_derived_seeds(
            d.n_sim,
            d.t_sim,
            d.call_freq,
            self.seed(&[label("deployment"), label(&ds.name)]),
            ds.deploy_value,
        )
    }

    /// Tune, train, test and deploy one model on one dataset.
    pub fn bench_model(
        &self,
        ds: &DatasetConfig,
        m: &ModelConfig,
        train: &TabularDataset,
        test: &TabularDataset,
    ) -> Result<ModelRun> {
        let (best, outcome) = self.tune_model(&ds.name, m, train)?;
        let t_hyper = outcome.as_ref().map_or(0.0, |o| o.t_hyper);

        let t0 = Instant::now();
        let handle = models::fit(&best, train)?;
        let t_train = t0.elapsed().as_secs_f64();

        let t0 = Instant::now();
        let pred = handle.predict(&test.features)?;
        let t_test = t0.elapsed().as_secs_f64();
        let rmse = benchmark::rmse(&pred, &test.target)?;

        let p = &self.config.process;
        let model = p.model.with_response_action(&ds.response_action, ds.deploy_value)?;
        let sim = Simulator::new(model.clone(), p.noise, p.dt)?;
        let plant = Plant {
            dynamics: &sim,
            basins: ds.ladder.build()?.basins(),
            initial: settle(&model, p.dt, p.warmup)?,
            features: FeatureMap::new(&train.feature_names(), &self.state_names(), &ds.response_action)?,
        };
        let dep = self.deployment(ds);
        let outcome = run_deployment(&handle, &plant, &dep, &self.config.alarm)?;
        let alarms = AlarmMetrics::from_outcome(&outcome, &self.config.alarm)?;
        let dir = self.output.join("reports").join(&ds.name);
        outcome.write_episodes(create(&dir.join("episodes").join(format!("{}.csv", m.name)))?)?;
        std::fs::create_dir_all(dir.join("models")).map_err(|e| Error::io(&dir, e))?;
        let model_path = dir.join("models").join(format!("{}.json", m.name));
        std::fs::write(&model_path, handle.to_json()?).map_err(|e| Error::io(&model_path, e))?;

        let timings = Timings {
            t_hyper,
            t_train,
            t_test,
            t_deploy: alarms.t_deploy,
        };
        Ok(ModelRun {
            metrics: [
                rmse,
                t_hyper,
                t_train,
                t_test,
                alarms.t_deploy,
                alarms.delta_p,
                alarms.total_alarms as f64,
            ],
            alarms,
            timings,
            handle,
        })
    }

    /// The full benchmark: every model on every dataset, per-dataset
    /// reports under `reports/<dataset>/` and the global ranking.
    pub fn bench(&self) -> Result<BenchOutcome> {
        self.config.require_datasets()?;
        self.config.require_models()?;
        let mut manifest = self.manifest("bench");
        let mut tables = BTreeMap::new();
        let mut reports = BTreeMap::new();
        for ds in &self.config.datasets {
            let (train, test) = self.dataset_split(&ds.name)?;
            let mut table = MetricTable::new();
            let mut alarms = BTreeMap::new();
            let seeds = self.deployment(ds).seeds;
            for m in &self.config.models {
                info!("benchmarking {} on {}", m.name, ds.name);
                match self.bench_model(ds, m, &train, &test) {
                    Ok(run) => {
                        table.insert(m.name.clone(), run.metrics);
                        alarms.insert(m.name.clone(), run.alarms);
                        manifest
                            .timings
                            .entry(ds.name.clone())
                            .or_default()
                            .insert(m.name.clone(), run.timings);
                        manifest
                            .deployment_seeds
                            .entry(ds.name.clone())
                            .or_default()
                            .insert(m.name.clone(), seeds.clone());
                    }
                    Err(e) => {
                        let msg = format!(
                            "model {} failed on dataset {}: {e}; excluded from scaling",
                            m.name, ds.name
                        );
                        warn!("{msg}");
                        manifest.warnings.push(msg);
                        manifest
                            .failures
                            .entry(ds.name.clone())
                            .or_default()
                            .insert(m.name.clone(), e.to_string());
                    }
                }
            }
            if table.is_empty() {
                return Err(Error::AllTrialsFailed(self.config.models.len()).context(format!("dataset {:?}", ds.name)));
            }
            let report = DatasetReport::new(table.clone(), &self.config.weights.a)?;
            for c in &report.zero_columns {
                manifest
                    .warnings
                    .push(format!("dataset {}: metric {c} is zero for every model", ds.name));
            }
            let dir = self.output.join("reports").join(&ds.name);
            report.write(&dir)?;
            write_json(&dir.join("alarms.json"), &alarms)?;
            tables.insert(ds.name.clone(), table);
            reports.insert(ds.name.clone(), report);
        }
        let global = self.global_ranking(&tables, &mut manifest)?;
        let manifest = self.finish(manifest)?;
        Ok(BenchOutcome {
            reports,
            global,
            manifest,
        })
    }

    fn global_ranking(
        &self,
        tables: &BTreeMap<String, MetricTable>,
        manifest: &mut Manifest,
    ) -> Result<Vec<(String, f64)>> {
        let mut common: Option<Vec<String>> = None;
        for t in tables.values() {
            let names: Vec<String> = t.keys().cloned().collect();
            common = Some(match common {
                None => names,
                Some(c) => c.into_iter().filter(|n| names.contains(n)).collect(),
            });
        }
        let common = common.unwrap_or_default();
        let mut trimmed = BTreeMap::new();
        for (d, t) in tables {
            let kept: MetricTable = t
                .iter()
                .filter(|(m, _)| common.contains(m))
                .map(|(m, v)| (m.clone(), *v))
                .collect();
            for m in t.keys().filter(|m| !common.contains(m)) {
                let msg = format!("model {m} is missing from some datasets; left out of the global ranking");
                warn!("{msg}");
                manifest.warnings.push(msg);
            }
            if kept.is_empty() {
                return Err(Error::MissingCell {
                    model: "<all>".into(),
                    dataset: d.clone(),
                });
            }
            trimmed.insert(d.clone(), kept);
        }
        let w = &self.config.weights;
        let weights = benchmark::sample_weight_vectors(&w.bounds, w.samples, self.seed(&[label("weights")]))?;
        let global = benchmark::global_ranking(&trimmed, &weights)?;
        let dir = self.output.join("reports");
        benchmark::write_global_ranking(&dir.join("global_ranking.csv"), &global)?;
        let mut out = csv::Writer::from_writer(create(&dir.join("weights.csv"))?);
        out.write_record(["sample", "a1", "a2", "a3", "a4", "a5", "a6", "a7"])?;
        for (i, v) in weights.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(v.iter().map(|x| x.to_string()));
            out.write_record(&rec)?;
        }
        out.flush().map_err(|e| Error::io(&dir, e))?;
        Ok(global)
    }

    /// Recomputes costs, local rankings and the global ranking from the
    /// `metrics.csv` files of an earlier `bench` run.
    pub fn rank(&self) -> Result<Vec<(String, f64)>> {
        self.config.require_datasets()?;
        let mut manifest = self.manifest("rank");
        let mut tables = BTreeMap::new();
        for ds in &self.config.datasets {
            let dir = self.output.join("reports").join(&ds.name);
            let table = benchmark::read_metrics(&dir.join("metrics.csv")).map_err(|e| {
                e.context(format!(
                    "dataset {:?} has no benchmark results; run `bench` first",
                    ds.name
                ))
            })?;
            DatasetReport::new(table.clone(), &self.config.weights.a)?.write(&dir)?;
            tables.insert(ds.name.clone(), table);
        }
        let global = self.global_ranking(&tables, &mut manifest)?;
        self.finish(manifest)?;
        Ok(global)
    }
}

fn units(model: &ProcessModel) -> BTreeMap<String, String> {
    let pairs: &[(&str, &str)] = match model {
        ProcessModel::Exothermic(_) => &[("C_A", "kmol/m^3"), ("T", "K"), ("T_C", "K"), ("e_I", "K min")],
        ProcessModel::Polystyrene(_) => &[("x1", "-"), ("x2", "-"), ("x3", "-"), ("x4", "-"), ("e_int", "-")],
        ProcessModel::RandomWalk(_) => &[("x", "-")],
    };
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}
