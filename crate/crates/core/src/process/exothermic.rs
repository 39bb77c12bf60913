use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::ProcessState;

/// Constants of the PI-controlled exothermic CSTR (first-order A -> P).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExothermicParams {
    /// Heat-transfer area, m^2.
    pub a: f64,
    /// Feed concentration, kmol/m^3.
    pub c_af: f64,
    pub c_p: f64,
    pub c_pw: f64,
    /// Activation energy, kJ/kmol.
    pub e: f64,
    /// Nominal coolant flow, m^3/min.
    pub f_c0: f64,
    pub k0: f64,
    pub r: f64,
    pub t_c0: f64,
    pub t_f: f64,
    pub t_sp: f64,
    pub u: f64,
    pub v_reactor: f64,
    pub v_j: f64,
    /// Heat of reaction, kJ/kmol (negative: exothermic).
    pub delta_h: f64,
    pub rho: f64,
    pub rho_w: f64,
    /// Controller gain, m^3/(min K).
    pub k_c: f64,
    /// Integral time, min.
    pub tau_i: f64,
    /// Residence time, min.
    pub tau: f64,
    pub f_c_min: f64,
    pub f_c_max: f64,
    /// Initial reactant concentration, kmol/m^3.
    pub c_a0: f64,
    /// Initial reactor temperature, K.
    pub t_0: f64,
}

impl Default for ExothermicParams {
    fn default() -> Self {
        Self {
            a: 30.0,
            c_af: 2.0,
            c_p: 4.0,
            c_pw: 4.0,
            e: 1.5e4,
            f_c0: 50.0,
            k0: 17.038,
            r: 8.314,
            t_c0: 300.0,
            t_f: 300.0,
            t_sp: 800.0,
            u: 100.0,
            v_reactor: 10.0,
            v_j: 10.0,
            delta_h: -2.2e6,
            rho: 1000.0,
            rho_w: 1000.0,
            k_c: 0.02,
            tau_i: 25.0,
            tau: 0.53,
            f_c_min: 30.0,
            f_c_max: 70.0,
            c_a0: 1.2,
            t_0: 700.0,
        }
    }
}

impl ExothermicParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("A", self.a),
            ("C_Af", self.c_af),
            ("c_p", self.c_p),
            ("c_pw", self.c_pw),
            ("E", self.e),
            ("F_C0", self.f_c0),
            ("k0", self.k0),
            ("R", self.r),
            ("T_C0", self.t_c0),
            ("T_f", self.t_f),
            ("T_SP", self.t_sp),
            ("U", self.u),
            ("V_reactor", self.v_reactor),
            ("V_j", self.v_j),
            ("rho", self.rho),
            ("rho_w", self.rho_w),
            ("K_C", self.k_c),
            ("tau_I", self.tau_i),
            ("tau", self.tau),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("exothermic {name} must be > 0, got {v}")));
            }
        }
        if !(self.delta_h < 0.0) {
            return Err(Error::config("exothermic delta_H must be negative"));
        }
        if !(self.f_c_min <= self.f_c_max) {
            return Err(Error::config("F_C bounds are inverted"));
        }
        Ok(())
    }

    /// `[C_A0, T_0, T_C0, 0]`; the jacket starts at the coolant inlet
    /// temperature and the integral error at zero.
    pub fn initial_state(&self) -> [f64; 4] {
        [self.c_a0, self.t_0, self.t_c0, 0.0]
    }

    #[inline]
    pub fn rate_constant(&self, t: f64) -> f64 {
        self.k0 * (-self.e / (self.r * t)).exp()
    }
}

/// PI coolant flow, clamped to `[F_C,min, F_C,max]`.
#[inline]
pub fn coolant_flow(p: &ExothermicParams, t: f64, e_i: f64) -> f64 {
    let demand = p.f_c0 + p.k_c * (t - p.t_sp - e_i / p.tau_i);
    demand.clamp(p.f_c_min, p.f_c_max)
}

/// Time derivatives `(dC_A/dt, dT/dt, dT_C/dt, de_I/dt)`. The disturbance
/// `eta` perturbs the feed concentration.
pub fn exothermic_derivatives(x: &[f64; 4], p: &ExothermicParams, eta: f64) -> Result<[f64; 4]> {
    let [c_a, t, t_c, e_i] = *x;
    let k = p.rate_constant(t);
    let rate = k * c_a;
    let ua = p.u * p.a;
    let f_c = coolant_flow(p, t, e_i);

    let dc_a = (p.c_af - c_a + eta) / p.tau - rate;
    let dt = (p.t_f - t) / p.tau - p.delta_h * rate / (p.rho * p.c_p) + ua * (t_c - t) / (p.rho * p.v_reactor * p.c_p);
    let dt_c = f_c / p.v_j * (p.t_c0 - t_c) - ua / (p.rho_w * p.v_j * p.c_pw) * (t_c - t);
    let de_i = p.t_sp - t;

    let out = [dc_a, dt, dt_c, de_i];
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::Diverged {
            last_finite: Box::new(ProcessState::new(f64::NAN, x.to_vec())),
        })
    }
}
