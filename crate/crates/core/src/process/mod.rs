//! Stochastic, feedback-controlled process models.
//!
//! Each model is a steppable dynamical system. One Gaussian disturbance is
//! drawn per integration step and held constant across the RK4 stages.

mod exothermic;
mod polystyrene;
mod walk;

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

pub use exothermic::{coolant_flow, exothermic_derivatives, ExothermicParams};
pub use polystyrene::{
    kappa_d, kappa_p, kappa_t, polystyrene_coolant_flow, polystyrene_derivatives, radical_concentration,
    PolystyreneParams,
};
pub use walk::WalkParams;

/// Full dynamical state of a simulated process plus controller memory.
///
/// For the exothermic CSTR `x = [C_A, T, T_C, e_I]`; for the polystyrene CSTR
/// `x = [x1, x2, x3, x4, e_int]` where `e_int` is the integral of the
/// set-point error; for the random walk `x = [position]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessState {
    pub t: f64,
    pub x: Vec<f64>,
    /// Set-point error at the previous integration point, for the PID
    /// derivative term.
    pub prev_error: Option<f64>,
}

impl ProcessState {
    pub fn new(t: f64, x: Vec<f64>) -> Self {
        Self { t, x, prev_error: None }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(default)]
    pub mean: f64,
    pub variance: f64,
}

impl NoiseSpec {
    pub const fn new(variance: f64) -> Self {
        Self { mean: 0.0, variance }
    }

    pub const fn silent() -> Self {
        Self::new(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance >= 0.0) || !self.variance.is_finite() {
            return Err(Error::config(format!(
                "noise variance must be >= 0, got {}",
                self.variance
            )));
        }
        if self.mean != 0.0 {
            return Err(Error::config("noise mean must be 0"));
        }
        Ok(())
    }
}

/// Direction in which the order parameter moves during an abnormal
/// transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increasing,
    Decreasing,
}

impl Direction {
    /// `a` is at or past `b` when moving in this direction.
    #[inline]
    pub fn reached(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Increasing => a >= b,
            Direction::Decreasing => a <= b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basin {
    A,
    B,
    Transition,
}

/// Basin boundaries in order-parameter space. Basin A is everything on the
/// near side of `lambda_a` (inclusive), basin B everything at or past
/// `lambda_b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasinSpec {
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub direction: Direction,
}

impl BasinSpec {
    pub fn new(lambda_a: f64, lambda_b: f64) -> Result<Self> {
        let direction = if lambda_b > lambda_a {
            Direction::Increasing
        } else {
            Direction::Decreasing
        };
        let spec = Self {
            lambda_a,
            lambda_b,
            direction,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda_a.is_finite() || !self.lambda_b.is_finite() {
            return Err(Error::config("basin bounds must be finite"));
        }
        let ok = match self.direction {
            Direction::Increasing => self.lambda_a < self.lambda_b,
            Direction::Decreasing => self.lambda_a > self.lambda_b,
        };
        if !ok {
            return Err(Error::config(format!(
                "basins overlap or disagree with direction {:?}: A bound {}, B bound {}",
                self.direction, self.lambda_a, self.lambda_b
            )));
        }
        Ok(())
    }

    pub fn classify_lambda(&self, lambda: f64) -> Basin {
        if self.direction.reached(lambda, self.lambda_b) {
            Basin::B
        } else if self.direction.reached(self.lambda_a, lambda) {
            Basin::A
        } else {
            Basin::Transition
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessModel {
    Exothermic(ExothermicParams),
    Polystyrene(PolystyreneParams),
    RandomWalk(WalkParams),
}

impl ProcessModel {
    pub fn name(&self) -> &'static str {
        match self {
            ProcessModel::Exothermic(_) => "exothermic",
            ProcessModel::Polystyrene(_) => "polystyrene",
            ProcessModel::RandomWalk(_) => "random_walk",
        }
    }

    pub fn state_names(&self) -> &'static [&'static str] {
        match self {
            ProcessModel::Exothermic(_) => &["C_A", "T", "T_C", "e_I"],
            ProcessModel::Polystyrene(_) => &["x1", "x2", "x3", "x4", "e_int"],
            ProcessModel::RandomWalk(_) => &["x"],
        }
    }

    /// Initial state from the published initial conditions.
    pub fn initial_state(&self) -> ProcessState {
        match self {
            ProcessModel::Exothermic(p) => ProcessState::new(0.0, p.initial_state().to_vec()),
            ProcessModel::Polystyrene(p) => ProcessState::new(0.0, p.initial_state().to_vec()),
            ProcessModel::RandomWalk(p) => ProcessState::new(0.0, vec![p.start as f64]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ProcessModel::Exothermic(p) => p.validate(),
            ProcessModel::Polystyrene(p) => p.validate(),
            ProcessModel::RandomWalk(p) => p.validate(),
        }
    }

    /// Scalar projection used to place interfaces: reactor temperature for
    /// both reactors, position for the walk.
    #[inline]
    pub fn order_parameter(&self, state: &ProcessState) -> f64 {
        match self {
            ProcessModel::Exothermic(_) => state.x[1],
            ProcessModel::Polystyrene(_) => state.x[2],
            ProcessModel::RandomWalk(_) => state.x[0],
        }
    }

    pub fn classify_basin(&self, state: &ProcessState, basins: &BasinSpec) -> Basin {
        basins.classify_lambda(self.order_parameter(state))
    }

    /// Returns a copy with the named response-action parameter replaced.
    pub fn with_response_action(&self, name: &str, value: f64) -> Result<ProcessModel> {
        let mut model = self.clone();
        match (&mut model, name) {
            (ProcessModel::Exothermic(p), "tau") => p.tau = value,
            (ProcessModel::Polystyrene(p), "q_i") => p.q_i = value,
            (ProcessModel::Polystyrene(p), "q_m") => p.q_m = value,
            (ProcessModel::Polystyrene(p), "q_s") => p.q_s = value,
            (ProcessModel::RandomWalk(p), "p_up") => p.p_up = value,
            _ => {
                return Err(Error::config(format!(
                    "unknown response-action variable `{name}` for {} model",
                    self.name()
                )))
            }
        }
        model.validate()?;
        Ok(model)
    }
}

/// Advances a state by one step. Implemented by [`Simulator`]; the sampling
/// engine only relies on this trait.
pub trait Dynamics: Sync {
    fn step(&self, state: &ProcessState, rng: &mut StreamRng) -> Result<ProcessState>;
    fn order_parameter(&self, state: &ProcessState) -> f64;
    fn state_names(&self) -> Vec<String>;
    fn dt(&self) -> f64;
}

/// A process model bound to a noise level and an integration step.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulator {
    pub model: ProcessModel,
    pub noise: NoiseSpec,
    pub dt: f64,
    normal: Normal<f64>,
}

impl Simulator {
    pub fn new(model: ProcessModel, noise: NoiseSpec, dt: f64) -> Result<Self> {
        model.validate()?;
        noise.validate()?;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::config(format!("dt must be > 0, got {dt}")));
        }
        let normal =
            Normal::new(noise.mean, noise.variance.sqrt()).map_err(|e| Error::config(format!("noise: {e}")))?;
        Ok(Self {
            model,
            noise,
            dt,
            normal,
        })
    }

    pub fn step_with(&self, state: &ProcessState, rng: &mut impl Rng) -> Result<ProcessState> {
        let dt = self.dt;
        let next = match &self.model {
            ProcessModel::Exothermic(p) => {
                let eta = self.normal.sample(rng);
                let x0: [f64; 4] = state.x[..4].try_into().expect("exothermic state has 4 entries");
                let mut x = rk4(x0, dt, |x| {
                    let mut s = *x;
                    s[0] = s[0].max(0.0);
                    exothermic_derivatives(&s, p, eta)
                })
                .map_err(|_| diverged(state))?;
                x[0] = x[0].max(0.0);
                ProcessState {
                    t: state.t + dt,
                    x: x.to_vec(),
                    prev_error: None,
                }
            }
            ProcessModel::Polystyrene(p) => {
                let eta = self.normal.sample(rng);
                let x0: [f64; 5] = state.x[..5].try_into().expect("polystyrene state has 5 entries");
                let error = p.x3_sp - x0[2];
                let d_err = state.prev_error.map_or(0.0, |prev| (error - prev) / dt);
                let mut x = rk4(x0, dt, |x| {
                    let mut s = *x;
                    s[0] = s[0].max(0.0);
                    s[1] = s[1].max(0.0);
                    polystyrene_derivatives(&s, p, eta, d_err)
                })
                .map_err(|_| diverged(state))?;
                x[0] = x[0].max(0.0);
                x[1] = x[1].max(0.0);
                ProcessState {
                    t: state.t + dt,
                    x: x.to_vec(),
                    prev_error: Some(error),
                }
            }
            ProcessModel::RandomWalk(p) => {
                let up = rng.random::<f64>() < p.p_up;
                let pos = state.x[0] + if up { 1.0 } else { -1.0 };
                ProcessState {
                    t: state.t + dt,
                    x: vec![pos.max(p.floor as f64)],
                    prev_error: None,
                }
            }
        };
        if !next.is_finite() {
            return Err(diverged(state));
        }
        Ok(next)
    }
}

fn diverged(state: &ProcessState) -> Error {
    Error::Diverged {
        last_finite: Box::new(state.clone()),
    }
}

impl Dynamics for Simulator {
    fn step(&self, state: &ProcessState, rng: &mut StreamRng) -> Result<ProcessState> {
        self.step_with(state, rng)
    }

    fn order_parameter(&self, state: &ProcessState) -> f64 {
        self.model.order_parameter(state)
    }

    fn state_names(&self) -> Vec<String> {
        self.model.state_names().iter().map(|s| s.to_string()).collect()
    }

    fn dt(&self) -> f64 {
        self.dt
    }
}

/// Classic fixed-step fourth-order Runge-Kutta.
pub fn rk4<const N: usize>(x: [f64; N], dt: f64, f: impl Fn(&[f64; N]) -> Result<[f64; N]>) -> Result<[f64; N]> {
    let axpy = |a: &[f64; N], k: &[f64; N], h: f64| -> [f64; N] {
        let mut out = *a;
        for (o, ki) in out.iter_mut().zip(k) {
            *o += h * ki;
        }
        out
    };
    let k1 = f(&x)?;
    let k2 = f(&axpy(&x, &k1, 0.5 * dt))?;
    let k3 = f(&axpy(&x, &k2, 0.5 * dt))?;
    let k4 = f(&axpy(&x, &k3, dt))?;
    let mut out = x;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_sim: f64,
    pub seed: u64,
    /// Stop as soon as the state enters basin B of this spec.
    #[serde(default)]
    pub stop_on_basin: Option<BasinSpec>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::config(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_sim >= self.dt) {
            return Err(Error::config(format!(
                "t_sim ({}) must be >= dt ({})",
                self.t_sim, self.dt
            )));
        }
        if let Some(b) = &self.stop_on_basin {
            b.validate()?;
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_sim / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub names: Vec<String>,
    pub states: Vec<ProcessState>,
    pub lambdas: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend(self.names.iter().cloned());
        header.push("lambda".into());
        out.write_record(&header)?;
        for (s, l) in self.states.iter().zip(&self.lambdas) {
            let mut rec = Vec::with_capacity(s.x.len() + 2);
            rec.push(s.t.to_string());
            rec.extend(s.x.iter().map(|v| v.to_string()));
            rec.push(l.to_string());
            out.write_record(&rec)?;
        }
        out.flush().map_err(|e| Error::io("<trajectory>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Integrates `initial` for `t_sim / dt` steps, or until basin B is entered
/// when the config asks for early termination.
pub fn simulate(
    initial: &ProcessState,
    model: &ProcessModel,
    noise: NoiseSpec,
    config: &SimConfig,
) -> Result<Trajectory> {
    config.validate()?;
    let sim = Simulator::new(model.clone(), noise, config.dt)?;
    let mut rng = rng::stream(config.seed, &[rng::label("simulate")]);
    let n = config.n_steps();
    let mut states = Vec::with_capacity(n + 1);
    let mut lambdas = Vec::with_capacity(n + 1);
    let mut state = initial.clone();
    lambdas.push(model.order_parameter(&state));
    states.push(state.clone());
    for _ in 0..n {
        state = sim.step_with(&state, &mut rng)?;
        let lambda = model.order_parameter(&state);
        states.push(state.clone());
        lambdas.push(lambda);
        if let Some(b) = &config.stop_on_basin {
            if b.classify_lambda(lambda) == Basin::B {
                break;
            }
        }
    }
    Ok(Trajectory {
        names: model.state_names().iter().map(|s| s.to_string()).collect(),
        states,
        lambdas,
    })
}
