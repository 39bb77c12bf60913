//! Dense feed-forward network trained on mean-squared error.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn grad(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DnnParams {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for DnnParams {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            activation: Activation::Relu,
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            seed: 0,
        }
    }
}

impl DnnParams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("a DNN needs at least one hidden layer, all widths >= 1"));
        }
        if self.epochs < 1 || self.batch_size < 1 || !(self.learning_rate > 0.0) {
            return Err(Error::config("need epochs >= 1, batch_size >= 1, learning_rate > 0"));
        }
        Ok(())
    }
}

/// Weight matrix (`outputs x inputs`, row-major) and bias of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            w: vec![0.0; inputs * outputs],
            b: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.w[o * self.inputs..(o + 1) * self.inputs];
            out.push(row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b[o]);
        }
    }
}

/// Hidden layers use `activation`; the output layer is a single linear unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub activation: Activation,
}

impl Mlp {
    pub fn zeros(n_inputs: usize, hidden: &[usize], activation: Activation) -> Self {
        let mut widths = vec![n_inputs];
        widths.extend_from_slice(hidden);
        widths.push(1);
        Self {
            layers: widths.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
            activation,
        }
    }

    /// Uniform initialization scaled by fan-in (ReLU) or fan-in plus
    /// fan-out (tanh); biases start at zero.
    pub fn init(n_inputs: usize, hidden: &[usize], activation: Activation, seed: u64) -> Self {
        let mut net = Self::zeros(n_inputs, hidden, activation);
        let mut r = rng::stream(seed, &[rng::label("dnn-init")]);
        for l in &mut net.layers {
            let limit = match activation {
                Activation::Relu => (6.0 / l.inputs as f64).sqrt(),
                Activation::Tanh => (6.0 / (l.inputs + l.outputs) as f64).sqrt(),
            };
            for w in &mut l.w {
                *w = r.random_range(-limit..limit);
            }
        }
        net
    }

    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(l.outputs);
            l.forward(acts.last().unwrap(), &mut z);
            if i < last {
                z.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            acts.push(z);
        }
        acts
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.activations(x).last().unwrap()[0]
    }

    /// Mean squared error over the rows.
    pub fn loss(&self, x: &[Vec<f64>], y: &[f64]) -> f64 {
        x.iter()
            .zip(y)
            .map(|(r, t)| (self.predict_row(r) - t).powi(2))
            .sum::<f64>()
            / y.len() as f64
    }

    /// Gradient of [`Mlp::loss`] over the given rows, shaped like the network.
    pub fn gradients(&self, x: &[Vec<f64>], y: &[f64]) -> Mlp {
        let refs: Vec<usize> = (0..y.len()).collect();
        self.gradients_on(x, y, &refs)
    }

    fn gradients_on(&self, x: &[Vec<f64>], y: &[f64], rows: &[usize]) -> Mlp {
        let mut g = Mlp {
            layers: self.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect(),
            activation: self.activation,
        };
        let scale = 2.0 / rows.len() as f64;
        let last = self.layers.len() - 1;
        for &i in rows {
            let acts = self.activations(&x[i]);
            let mut delta = vec![scale * (acts[last + 1][0] - y[i])];
            for li in (0..=last).rev() {
                let l = &self.layers[li];
                let input = &acts[li];
                let gl = &mut g.layers[li];
                for o in 0..l.outputs {
                    gl.b[o] += delta[o];
                    let row = &mut gl.w[o * l.inputs..(o + 1) * l.inputs];
                    for (gw, a) in row.iter_mut().zip(input) {
                        *gw += delta[o] * a;
                    }
                }
                if li > 0 {
                    let mut prev = vec![0.0; l.inputs];
                    for o in 0..l.outputs {
                        let row = &l.w[o * l.inputs..(o + 1) * l.inputs];
                        for (p, w) in prev.iter_mut().zip(row) {
                            *p += delta[o] * w;
                        }
                    }
                    for (p, a) in prev.iter_mut().zip(input) {
                        *p *= self.activation.grad(*a);
                    }
                    delta = prev;
                }
            }
        }
        g
    }

    /// All weights and biases, layer by layer.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(&l.b).copied())
            .collect()
    }

    pub fn set_flat(&mut self, v: &[f64]) {
        let mut it = v.iter().copied();
        for l in &mut self.layers {
            for p in l.w.iter_mut().chain(l.b.iter_mut()) {
                *p = it.next().expect("parameter vector too short");
            }
        }
    }

    pub fn fit(params: &DnnParams, x: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        params.validate()?;
        let n = y.len();
        if n == 0 {
            return Err(Error::EmptyDataset("cannot fit a network on zero rows".into()));
        }
        let mut net = Self::init(x[0].len(), &params.hidden, params.activation, params.seed);
        let mut theta = net.flatten();
        let mut m = vec![0.0; theta.len()];
        let mut v = vec![0.0; theta.len()];
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let mut step = 0i32;
        let mut order: Vec<usize> = (0..n).collect();
        let mut r = rng::stream(params.seed, &[rng::label("dnn-batches")]);
        for epoch in 0..params.epochs {
            order.shuffle(&mut r);
            for batch in order.chunks(params.batch_size) {
                let g = net.gradients_on(x, y, batch).flatten();
                step += 1;
                match params.optimizer {
                    Optimizer::Sgd => {
                        for (t, gi) in theta.iter_mut().zip(&g) {
                            *t -= params.learning_rate * gi;
                        }
                    }
                    Optimizer::Adam => {
                        let c1 = 1.0 - b1.powi(step);
                        let c2 = 1.0 - b2.powi(step);
                        for k in 0..theta.len() {
                            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                            theta[k] -= params.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
                        }
                    }
                }
                net.set_flat(&theta);
            }
            if theta.iter().any(|t| !t.is_finite()) {
                return Err(Error::TrainingDiverged(format!(
                    "network weights became non-finite in epoch {epoch}; try a smaller learning rate than {}",
                    params.learning_rate
                )));
            }
        }
        let loss = net.loss(x, y);
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged(format!(
                "training loss is non-finite; try a smaller learning rate than {}",
                params.learning_rate
            )));
        }
        Ok(net)
    }
}
