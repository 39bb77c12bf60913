use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::ProcessState;

/// Dimensionless constants of the PID-controlled polystyrene CSTR.
///
/// The activation-energy groups `gamma_*` are not tabulated with the other
/// constants; the defaults make the published initial condition a steady
/// state at `q_c = q_c0` (residuals below 1e-4 in every balance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolystyreneParams {
    pub q_i: f64,
    pub q_m: f64,
    pub q_s: f64,
    /// Coolant flow bias of the PID law.
    pub q_c0: f64,
    pub phi_d: f64,
    pub phi_p: f64,
    pub phi_t: f64,
    pub gamma_d: f64,
    pub gamma_p: f64,
    pub gamma_t: f64,
    pub x1f: f64,
    pub x2f: f64,
    pub x3f: f64,
    pub x4f: f64,
    pub delta: f64,
    pub delta_1: f64,
    pub delta_2: f64,
    pub beta: f64,
    /// Initiator efficiency.
    pub f: f64,
    pub x3_sp: f64,
    pub k_c: f64,
    pub tau_d: f64,
    pub tau_i: f64,
    pub q_c_min: f64,
    pub q_c_max: f64,
    /// Initial `[x1, x2, x3, x4]`.
    pub x0: [f64; 4],
}

impl Default for PolystyreneParams {
    fn default() -> Self {
        Self {
            q_i: 0.1,
            q_m: 0.4,
            q_s: 0.48571,
            q_c0: 1.5,
            phi_d: 0.01688,
            phi_p: 2.1956e7,
            phi_t: 9.6583e12,
            gamma_d: 4.2267,
            gamma_p: 10.113,
            gamma_t: 0.23729,
            x1f: 0.06769,
            x2f: 1.0,
            x3f: 0.0,
            x4f: -1.5,
            delta: 0.74074,
            delta_1: 0.90569,
            delta_2: 0.37256,
            beta: 13.17936,
            f: 0.6,
            x3_sp: 0.85,
            k_c: 50.0,
            tau_d: 0.9,
            tau_i: 5.0,
            q_c_min: 0.0,
            q_c_max: 5.0,
            x0: [0.0041, 0.2156, 0.951, -1.1191],
        }
    }
}

impl PolystyreneParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("phi_d", self.phi_d), ("phi_p", self.phi_p), ("phi_t", self.phi_t)] {
            if !(v > 0.0) {
                return Err(Error::config(format!("polystyrene {name} must be > 0, got {v}")));
            }
        }
        if !(self.f > 0.0 && self.f <= 1.0) {
            return Err(Error::config(format!(
                "initiator efficiency must lie in (0, 1], got {}",
                self.f
            )));
        }
        for (name, v) in [
            ("q_i", self.q_i),
            ("q_m", self.q_m),
            ("q_s", self.q_s),
            ("q_c0", self.q_c0),
        ] {
            if !(v >= 0.0) {
                return Err(Error::config(format!("polystyrene {name} must be >= 0, got {v}")));
            }
        }
        if !(self.gamma_p > 0.0) || !(self.tau_i > 0.0) || !(self.tau_d >= 0.0) {
            return Err(Error::config("gamma_p and tau_I must be > 0, tau_D >= 0"));
        }
        if !(self.q_c_min <= self.q_c_max) {
            return Err(Error::config("q_c bounds are inverted"));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> [f64; 5] {
        [self.x0[0], self.x0[1], self.x0[2], self.x0[3], 0.0]
    }

    #[inline]
    fn arrhenius_arg(&self, x3: f64) -> f64 {
        x3 / (1.0 + x3 / self.gamma_p)
    }
}

#[inline]
pub fn kappa_d(p: &PolystyreneParams, x3: f64) -> f64 {
    (p.gamma_d * p.arrhenius_arg(x3)).exp()
}

#[inline]
pub fn kappa_t(p: &PolystyreneParams, x3: f64) -> f64 {
    (p.gamma_t * p.arrhenius_arg(x3)).exp()
}

#[inline]
pub fn kappa_p(p: &PolystyreneParams, x3: f64) -> f64 {
    p.arrhenius_arg(x3).exp()
}

/// Growing-polymer concentration `x5` from the quasi-steady radical balance.
pub fn radical_concentration(p: &PolystyreneParams, x1: f64, x3: f64) -> Result<f64> {
    if x1 < 0.0 {
        return Err(Error::Domain(format!("x1 must be >= 0, got {x1}")));
    }
    Ok((2.0 * p.f * p.phi_d * kappa_d(p, x3) * x1 / (p.phi_t * kappa_t(p, x3))).sqrt())
}

/// PID coolant flow clamped to `[q_c,min, q_c,max]`. `d_err` is the
/// time derivative of the set-point error.
#[inline]
pub fn polystyrene_coolant_flow(p: &PolystyreneParams, x3: f64, e_int: f64, d_err: f64) -> f64 {
    let err = p.x3_sp - x3;
    let demand = p.q_c0 - p.k_c * (err + e_int / p.tau_i + p.tau_d * d_err);
    demand.clamp(p.q_c_min, p.q_c_max)
}

/// Derivatives `(dx1, dx2, dx3, dx4, de_int)/d tau`. The disturbance `eta`
/// perturbs the monomer feed concentration.
pub fn polystyrene_derivatives(x: &[f64; 5], p: &PolystyreneParams, eta: f64, d_err: f64) -> Result<[f64; 5]> {
    let [x1, x2, x3, x4, e_int] = *x;
    let x5 = radical_concentration(p, x1, x3)?;
    let q = p.q_i + p.q_m + p.q_s;
    let kd = kappa_d(p, x3);
    let propagation = p.phi_p * kappa_p(p, x3) * x2 * x5;
    let q_c = polystyrene_coolant_flow(p, x3, e_int, d_err);

    let dx1 = p.q_i * p.x1f - q * x1 - p.phi_d * kd * x1;
    let dx2 = p.q_m * (p.x2f + eta) - q * x2 - propagation;
    let dx3 = q * (p.x3f - x3) + p.beta * propagation - p.delta * (x3 - x4);
    let dx4 = p.delta_1 * (q_c * (p.x4f - x4) + p.delta * p.delta_2 * (x3 - x4));
    let de = p.x3_sp - x3;

    let out = [dx1, dx2, dx3, dx4, de];
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::Diverged {
            last_finite: Box::new(ProcessState::new(f64::NAN, x.to_vec())),
        })
    }
}
