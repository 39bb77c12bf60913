//! Linear epsilon-insensitive support-vector regression.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearSvrParams {
    pub c: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for LinearSvrParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            epsilon: 0.0,
            epochs: 200,
            learning_rate: 0.1,
            seed: 0,
        }
    }
}

impl LinearSvrParams {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(Error::config("epsilon must be >= 0"));
        }
        if self.c.is_nan() || self.c < 0.0 {
            return Err(Error::config("C must be >= 0"));
        }
        if self.epochs < 1 || !(self.learning_rate > 0.0) {
            return Err(Error::config("need epochs >= 1 and learning_rate > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvr {
    pub w: Vec<f64>,
    pub b: f64,
}

impl LinearSvr {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.w.iter().zip(row).map(|(w, x)| w * x).sum::<f64>() + self.b
    }

    /// `0.5 |w|^2 + C * sum max(0, |y - f(x)| - epsilon)`
    pub fn objective(&self, c: f64, epsilon: f64, x: &[Vec<f64>], y: &[f64]) -> f64 {
        let slack: f64 = x
            .iter()
            .zip(y)
            .map(|(r, &t)| ((t - self.predict_row(r)).abs() - epsilon).max(0.0))
            .sum();
        0.5 * self.w.iter().map(|w| w * w).sum::<f64>() + c * slack
    }

    /// Stochastic subgradient descent on the objective divided by `C N`,
    /// with step `lr / sqrt(t)` and the returned weights averaged over the
    /// second half of all updates.
    pub fn fit(params: &LinearSvrParams, x: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        params.validate()?;
        let n = y.len();
        if n == 0 {
            return Err(Error::EmptyDataset("cannot fit SVR on zero rows".into()));
        }
        let d = x[0].len();
        if params.c == 0.0 {
            return Ok(Self {
                w: vec![0.0; d],
                b: y.iter().sum::<f64>() / n as f64,
            });
        }
        let reg = 1.0 / (params.c * n as f64);
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let mut w_avg = vec![0.0; d];
        let mut b_avg = 0.0;
        let mut averaged = 0usize;
        let total = params.epochs * n;
        let start_avg = total / 2;
        let mut order: Vec<usize> = (0..n).collect();
        let mut r = rng::stream(params.seed, &[rng::label("svr")]);
        let mut t = 0usize;
        for _ in 0..params.epochs {
            order.shuffle(&mut r);
            for &i in &order {
                t += 1;
                let step = params.learning_rate / (t as f64).sqrt();
                let f: f64 = w.iter().zip(&x[i]).map(|(a, v)| a * v).sum::<f64>() + b;
                let resid = y[i] - f;
                let s = if resid.abs() > params.epsilon {
                    -resid.signum()
                } else {
                    0.0
                };
                for (wj, xj) in w.iter_mut().zip(&x[i]) {
                    *wj -= step * (reg * *wj + s * xj);
                }
                b -= step * s;
                if t > start_avg {
                    averaged += 1;
                    let k = averaged as f64;
                    for (a, wj) in w_avg.iter_mut().zip(&w) {
                        *a += (wj - *a) / k;
                    }
                    b_avg += (b - b_avg) / k;
                }
            }
        }
        if w_avg.iter().any(|v| !v.is_finite()) || !b_avg.is_finite() {
            return Err(Error::TrainingDiverged(
                "SVR weights became non-finite; reduce learning_rate".into(),
            ));
        }
        Ok(Self { w: w_avg, b: b_avg })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_recover_the_line() {
        let x = vec![vec![0.0], vec![1.0]];
        let y = vec![0.0, 1.0];
        let p = LinearSvrParams {
            c: 1000.0,
            epsilon: 0.0,
            epochs: 20000,
            learning_rate: 0.1,
            seed: 1,
        };
        let m = LinearSvr::fit(&p, &x, &y).unwrap();
        assert!((m.w[0] - 1.0).abs() < 1e-3, "w = {}", m.w[0]);
        assert!(m.b.abs() < 1e-3, "b = {}", m.b);
    }

    #[test]
    fn zero_c_predicts_the_mean() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let m = LinearSvr::fit(
            &LinearSvrParams {
                c: 0.0,
                ..Default::default()
            },
            &x,
            &[0.1, 0.2, 0.6],
        )
        .unwrap();
        assert_eq!(m.w, vec![0.0]);
        assert!((m.b - 0.3).abs() < 1e-15);
    }

    #[test]
    fn points_inside_the_tube_have_no_slack() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 0.25]).collect();
        let y: Vec<f64> = x.iter().map(|r| 0.2 + 0.1 * r[0]).collect();
        let p = LinearSvrParams {
            c: 10.0,
            epsilon: 0.2,
            ..Default::default()
        };
        let m = LinearSvr::fit(&p, &x, &y).unwrap();
        for (r, t) in x.iter().zip(&y) {
            assert!((t - m.predict_row(r)).abs() <= 0.2 + 1e-9);
        }
    }
}
