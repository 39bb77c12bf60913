use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Biased +-1 random walk on the integers with a sticky floor. Used as a test
/// system with closed-form committer probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkParams {
    /// Probability of a +1 step.
    pub p_up: f64,
    /// Lowest reachable position; a down-step at the floor stays put.
    pub floor: i64,
    pub start: i64,
}

impl Default for WalkParams {
    fn default() -> Self {
        Self {
            p_up: 0.45,
            floor: -10,
            start: -5,
        }
    }
}

impl WalkParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_up > 0.0 && self.p_up < 1.0) {
            return Err(Error::config(format!("p_up must lie in (0, 1), got {}", self.p_up)));
        }
        if self.start < self.floor {
            return Err(Error::config("walk starts below its floor"));
        }
        Ok(())
    }

    /// Probability of hitting `b` before `a` from `x`, `a <= x <= b`
    /// (gambler's ruin).
    pub fn hitting_probability(&self, x: i64, a: i64, b: i64) -> f64 {
        let r = (1.0 - self.p_up) / self.p_up;
        let (i, n) = ((x - a) as f64, (b - a) as f64);
        if (r - 1.0).abs() < 1e-15 {
            i / n
        } else {
            (1.0 - r.powf(i)) / (1.0 - r.powf(n))
        }
    }
}
