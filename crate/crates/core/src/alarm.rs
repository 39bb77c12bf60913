//! Multi-level alarms driven by on-line committer-probability predictions.

use std::io::Write;
use std::time::{Duration, Instant};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Predictor;
use crate::process::{Basin, BasinSpec, Dynamics, ProcessState};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmSpec {
    pub thresholds: Vec<f64>,
}

impl Default for AlarmSpec {
    fn default() -> Self {
        Self {
            thresholds: vec![0.2, 0.5],
        }
    }
}

impl AlarmSpec {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        let s = Self { thresholds };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.thresholds;
        if t.is_empty() || t.iter().any(|&p| !(p > 0.0 && p < 1.0)) || t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config(format!(
                "alarm thresholds must be strictly increasing in (0, 1): {t:?}"
            )));
        }
        Ok(())
    }

    pub fn n_levels(&self) -> usize {
        self.thresholds.len()
    }
}

/// `p_B,k / p_B,k+1` for each level, with 1.0 above the last level.
pub fn theoretical_probs(spec: &AlarmSpec) -> Vec<f64> {
    let t = &spec.thresholds;
    (0..t.len())
        .map(|k| t[k] / t.get(k + 1).copied().unwrap_or(1.0))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Escalated,
    Deactivated,
    ReachedTerminalBasin,
    SimEnded,
}

impl Resolution {
    pub fn as_str(self) -> &'static str {
        match self {
            Resolution::Escalated => "escalated",
            Resolution::Deactivated => "deactivated",
            Resolution::ReachedTerminalBasin => "reached_terminal_basin",
            Resolution::SimEnded => "sim_ended",
        }
    }

    pub fn is_escalation(self) -> bool {
        matches!(self, Resolution::Escalated | Resolution::ReachedTerminalBasin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmEpisode {
    pub sim: usize,
    /// 1-based alarm level.
    pub level: usize,
    pub t_activate: f64,
    pub resolution: Resolution,
    pub t_resolve: f64,
}

#[derive(Debug, Clone)]
struct Open {
    level: usize,
    t_activate: f64,
}

/// Per-simulation alarm bookkeeping.
///
/// A level becomes active when a prediction is at or above its threshold
/// and inactive when a prediction drops below it. An episode opens each
/// time a level becomes active and is resolved at most once: escalated when
/// the next level becomes active while it is open, deactivated when its own
/// level drops, reached-terminal-basin when the last level is open as the
/// process enters basin B, or sim-ended.
#[derive(Debug, Clone)]
pub struct AlarmStateMachine {
    thresholds: Vec<f64>,
    sim: usize,
    active: Vec<bool>,
    open: Vec<Option<Open>>,
    pub episodes: Vec<AlarmEpisode>,
}

impl AlarmStateMachine {
    pub fn new(spec: &AlarmSpec, sim: usize) -> Self {
        let n = spec.n_levels();
        Self {
            thresholds: spec.thresholds.clone(),
            sim,
            active: vec![false; n],
            open: vec![None; n],
            episodes: Vec::new(),
        }
    }

    fn resolve(&mut self, k: usize, resolution: Resolution, t: f64) {
        if let Some(o) = self.open[k].take() {
            self.episodes.push(AlarmEpisode {
                sim: self.sim,
                level: o.level,
                t_activate: o.t_activate,
                resolution,
                t_resolve: t,
            });
        }
    }

    /// Feeds one prediction taken at time `t`.
    pub fn update(&mut self, t: f64, p: f64) {
        let n = self.thresholds.len();
        let now: Vec<bool> = self.thresholds.iter().map(|&th| p >= th).collect();
        let rising: Vec<bool> = (0..n).map(|k| now[k] && !self.active[k]).collect();
        for k in 0..n {
            if rising[k] {
                self.open[k] = Some(Open {
                    level: k + 1,
                    t_activate: t,
                });
            }
        }
        for k in 0..n.saturating_sub(1) {
            if rising[k + 1] {
                self.resolve(k, Resolution::Escalated, t);
            }
        }
        for k in 0..n {
            if !now[k] && self.active[k] {
                self.resolve(k, Resolution::Deactivated, t);
            }
        }
        self.active = now;
    }

    /// The process entered basin B at time `t`; the simulation stops.
    pub fn enter_terminal_basin(&mut self, t: f64) {
        let last = self.thresholds.len() - 1;
        self.resolve(last, Resolution::ReachedTerminalBasin, t);
        self.finish(t);
    }

    /// Closes every open episode as sim-ended.
    pub fn finish(&mut self, t: f64) {
        for k in 0..self.thresholds.len() {
            self.resolve(k, Resolution::SimEnded, t);
        }
        self.episodes
            .sort_by(|a, b| a.t_activate.total_cmp(&b.t_activate).then(a.level.cmp(&b.level)));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentConfig {
    pub n_sim: usize,
    pub t_sim: f64,
    /// Integration steps between model calls.
    pub call_freq: usize,
    /// One seed per simulation, shared by every model.
    pub seeds: Vec<u64>,
    pub response_value: f64,
}

impl DeploymentConfig {
    /// `n_sim` seeds derived from `master`.
    pub fn with_derived_seeds(n_sim: usize, t_sim: f64, call_freq: usize, master: u64, response_value: f64) -> Self {
        Self {
            n_sim,
            t_sim,
            call_freq,
            seeds: (0..n_sim)
                .map(|i| rng::derive_seed(master, &[rng::label("deploy"), i as u64]))
                .collect(),
            response_value,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sim < 1 || self.call_freq < 1 {
            return Err(Error::config("need n_sim >= 1 and call_freq >= 1"));
        }
        if self.seeds.len() != self.n_sim {
            return Err(Error::config(format!(
                "{} seeds for {} simulations",
                self.seeds.len(),
                self.n_sim
            )));
        }
        if !(self.t_sim > 0.0) {
            return Err(Error::config("t_sim must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureSource {
    State(usize),
    ResponseAction,
}

/// How to assemble a model input row from a live process state.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub sources: Vec<FeatureSource>,
}

impl FeatureMap {
    pub fn new(columns: &[String], state_names: &[String], response_action: &str) -> Result<Self> {
        let sources = columns
            .iter()
            .map(|c| {
                if c == response_action {
                    Ok(FeatureSource::ResponseAction)
                } else {
                    state_names
                        .iter()
                        .position(|s| s == c)
                        .map(FeatureSource::State)
                        .ok_or_else(|| {
                            Error::config(format!(
                                "feature {c:?} is neither a state variable nor {response_action:?}"
                            ))
                        })
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { sources })
    }

    pub fn row(&self, state: &ProcessState, response_value: f64) -> Vec<f64> {
        self.sources
            .iter()
            .map(|s| match s {
                FeatureSource::State(i) => state.x[*i],
                FeatureSource::ResponseAction => response_value,
            })
            .collect()
    }
}

/// Everything about the plant needed to run deployment simulations.
pub struct Plant<'a, D: Dynamics> {
    pub dynamics: &'a D,
    pub basins: BasinSpec,
    pub initial: ProcessState,
    pub features: FeatureMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub sim: usize,
    pub episodes: Vec<AlarmEpisode>,
    pub reached_b: bool,
    pub diverged: bool,
    pub predictions: usize,
}

fn run_one<D: Dynamics>(
    predictor: &dyn Predictor,
    plant: &Plant<D>,
    config: &DeploymentConfig,
    spec: &AlarmSpec,
    sim: usize,
    mut timer: Option<&mut Duration>,
) -> Result<SimLog> {
    let mut r = rng::stream(config.seeds[sim], &[rng::label("deploy")]);
    let mut machine = AlarmStateMachine::new(spec, sim);
    let mut state = plant.initial.clone();
    let n_steps = (config.t_sim / plant.dynamics.dt()).round() as usize;
    let mut predictions = 0;
    let mut call =
        |state: &ProcessState, machine: &mut AlarmStateMachine, timer: &mut Option<&mut Duration>| -> Result<()> {
            let t0 = Instant::now();
            let row = plant.features.row(state, config.response_value);
            let p = predictor.predict_one(&row)?;
            if let Some(d) = timer.as_deref_mut() {
                *d += t0.elapsed();
            }
            let p = if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
            machine.update(state.t, p);
            predictions += 1;
            Ok(())
        };
    call(&state, &mut machine, &mut timer)?;
    let mut reached_b = false;
    for i in 1..=n_steps {
        state = match plant.dynamics.step(&state, &mut r) {
            Ok(s) => s,
            Err(Error::Diverged { .. }) => {
                return Ok(SimLog {
                    sim,
                    episodes: Vec::new(),
                    reached_b: false,
                    diverged: true,
                    predictions,
                })
            }
            Err(e) => return Err(e),
        };
        if plant.basins.classify_lambda(plant.dynamics.order_parameter(&state)) == Basin::B {
            machine.enter_terminal_basin(state.t);
            reached_b = true;
            break;
        }
        if i % config.call_freq == 0 {
            call(&state, &mut machine, &mut timer)?;
        }
    }
    if !reached_b {
        machine.finish(state.t);
    }
    Ok(SimLog {
        sim,
        episodes: machine.episodes,
        reached_b,
        diverged: false,
        predictions,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentOutcome {
    pub logs: Vec<SimLog>,
    /// Prediction wall time over one dedicated simulation, seconds.
    pub t_deploy: f64,
}

impl DeploymentOutcome {
    pub fn episodes(&self) -> impl Iterator<Item = &AlarmEpisode> {
        self.logs.iter().filter(|l| !l.diverged).flat_map(|l| l.episodes.iter())
    }

    pub fn diverged(&self) -> usize {
        self.logs.iter().filter(|l| l.diverged).count()
    }

    /// Writes `sim,level,t_activate,resolution,t_resolve`.
    pub fn write_episodes<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["sim", "level", "t_activate", "resolution", "t_resolve"])?;
        for e in self.episodes() {
            out.write_record([
                e.sim.to_string(),
                e.level.to_string(),
                e.t_activate.to_string(),
                e.resolution.as_str().to_string(),
                e.t_resolve.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<episodes>", e))?;
        Ok(())
    }
}

/// Runs `n_sim` noisy simulations (in parallel, one seed each) with the
/// model called every `call_freq` steps, then times prediction calls over
/// one more single-threaded run of the first seed. Response actions are
/// never applied.
pub fn run_deployment<D: Dynamics>(
    predictor: &dyn Predictor,
    plant: &Plant<D>,
    config: &DeploymentConfig,
    spec: &AlarmSpec,
) -> Result<DeploymentOutcome> {
    config.validate()?;
    spec.validate()?;
    if predictor.n_features() != plant.features.sources.len() {
        return Err(Error::DimensionMismatch {
            expected: predictor.n_features(),
            got: plant.features.sources.len(),
        });
    }
    let logs = (0..config.n_sim)
        .into_par_iter()
        .map(|s| run_one(predictor, plant, config, spec, s, None))
        .collect::<Result<Vec<_>>>()?;
    let diverged = logs.iter().filter(|l| l.diverged).count();
    if diverged > 0 {
        warn!(
            "{diverged} of {} deployment simulations diverged and were excluded",
            config.n_sim
        );
    }
    let mut spent = Duration::ZERO;
    run_one(predictor, plant, config, spec, 0, Some(&mut spent))?;
    Ok(DeploymentOutcome {
        logs,
        t_deploy: spent.as_secs_f64(),
    })
}

/// Activation and escalation counts per level (index 0 = level 1) and the
/// measured escalation probabilities, `None` where a level never activated.
pub fn measured_probs<'a>(
    episodes: impl IntoIterator<Item = &'a AlarmEpisode>,
    n_levels: usize,
) -> (Vec<usize>, Vec<usize>, Vec<Option<f64>>) {
    let mut act = vec![0; n_levels];
    let mut esc = vec![0; n_levels];
    for e in episodes {
        act[e.level - 1] += 1;
        if e.resolution.is_escalation() {
            esc[e.level - 1] += 1;
        }
    }
    let p = act
        .iter()
        .zip(&esc)
        .map(|(&a, &e)| (a > 0).then(|| e as f64 / a as f64))
        .collect();
    (act, esc, p)
}

/// `sum_k k * |theoretical_k - measured_k|` over levels with a defined
/// measurement. Returns the value and the excluded (1-based) levels.
pub fn delta_p(theoretical: &[f64], measured: &[Option<f64>]) -> Result<(f64, Vec<usize>)> {
    if theoretical.len() != measured.len() {
        return Err(Error::DimensionMismatch {
            expected: theoretical.len(),
            got: measured.len(),
        });
    }
    let mut sum = 0.0;
    let mut excluded = Vec::new();
    for (k, (t, m)) in theoretical.iter().zip(measured).enumerate() {
        match m {
            Some(m) => sum += (k + 1) as f64 * (t - m).abs(),
            None => excluded.push(k + 1),
        }
    }
    if !excluded.is_empty() {
        warn!("alarm levels {excluded:?} never activated and are excluded from delta_p");
    }
    Ok((sum, excluded))
}

pub fn total_alarms<'a>(episodes: impl IntoIterator<Item = &'a AlarmEpisode>) -> usize {
    episodes.into_iter().count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmMetrics {
    pub activations: Vec<usize>,
    pub escalations: Vec<usize>,
    pub theoretical: Vec<f64>,
    pub measured: Vec<Option<f64>>,
    pub delta_p: f64,
    pub excluded_levels: Vec<usize>,
    pub total_alarms: usize,
    pub t_deploy: f64,
    pub diverged_sims: usize,
    pub terminal_entries: usize,
}

impl AlarmMetrics {
    pub fn from_outcome(outcome: &DeploymentOutcome, spec: &AlarmSpec) -> Result<Self> {
        let theoretical = theoretical_probs(spec);
        let (activations, escalations, measured) = measured_probs(outcome.episodes(), spec.n_levels());
        let (dp, excluded_levels) = delta_p(&theoretical, &measured)?;
        Ok(Self {
            total_alarms: activations.iter().sum(),
            activations,
            escalations,
            theoretical,
            measured,
            delta_p: dp,
            excluded_levels,
            t_deploy: outcome.t_deploy,
            diverged_sims: outcome.diverged(),
            terminal_entries: outcome.logs.iter().filter(|l| l.reached_b).count(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drive(ps: &[f64]) -> Vec<AlarmEpisode> {
        let mut m = AlarmStateMachine::new(&AlarmSpec::default(), 0);
        for (i, &p) in ps.iter().enumerate() {
            m.update(i as f64, p);
        }
        m.finish(ps.len() as f64);
        m.episodes
    }

    #[test]
    fn theoretical_ratios() {
        assert_eq!(theoretical_probs(&AlarmSpec::default()), vec![0.4, 0.5]);
        assert_eq!(theoretical_probs(&AlarmSpec::new(vec![0.5]).unwrap()), vec![0.5]);
        let t = theoretical_probs(&AlarmSpec::new(vec![0.25, 0.5, 0.75]).unwrap());
        assert_eq!(t, vec![0.5, 0.5 / 0.75, 0.75]);
        assert!(AlarmSpec::new(vec![0.5, 0.2]).is_err());
    }

    #[test]
    fn single_rising_excursion() {
        let e = drive(&[0.1, 0.3, 0.6]);
        let (act, esc, _) = measured_probs(&e, 2);
        assert_eq!(act, vec![1, 1]);
        assert_eq!(esc, vec![1, 0]);
        assert_eq!(e[0].resolution, Resolution::Escalated);
    }

    #[test]
    fn two_excursions_without_escalation() {
        let e = drive(&[0.1, 0.3, 0.1, 0.3, 0.1]);
        let (act, esc, p) = measured_probs(&e, 2);
        assert_eq!(act, vec![2, 0]);
        assert_eq!(esc, vec![0, 0]);
        assert_eq!(p, vec![Some(0.0), None]);
        assert!(e.iter().all(|x| x.resolution == Resolution::Deactivated));
    }

    #[test]
    fn jump_past_a_level_counts_both() {
        let e = drive(&[0.1, 0.9, 0.1]);
        let (act, esc, _) = measured_probs(&e, 2);
        assert_eq!(act, vec![1, 1]);
        assert_eq!(esc, vec![1, 0]);
    }

    #[test]
    fn terminal_basin_escalates_last_level_only() {
        let mut m = AlarmStateMachine::new(&AlarmSpec::default(), 0);
        m.update(0.0, 0.6);
        m.enter_terminal_basin(1.0);
        let (act, esc, _) = measured_probs(&m.episodes, 2);
        assert_eq!((act, esc), (vec![1, 1], vec![1, 1]));
        let mut m = AlarmStateMachine::new(&AlarmSpec::default(), 0);
        m.update(0.0, 0.3);
        m.enter_terminal_basin(1.0);
        assert_eq!(m.episodes[0].resolution, Resolution::SimEnded);
    }

    #[test]
    fn delta_p_examples() {
        assert_eq!(delta_p(&[0.4, 0.5], &[Some(0.4), Some(0.5)]).unwrap().0, 0.0);
        let (d, _) = delta_p(&[0.4, 0.5], &[Some(0.5), Some(0.3)]).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
        let (d, ex) = delta_p(&[0.4, 0.5], &[Some(0.4), None]).unwrap();
        assert_eq!((d, ex), (0.0, vec![2]));
    }

    #[test]
    fn total_is_episode_count() {
        let e = drive(&[0.3, 0.1, 0.3, 0.1, 0.3, 0.6]);
        assert_eq!(total_alarms(&e), 4);
        assert_eq!(total_alarms(&[]), 0);
    }
}
