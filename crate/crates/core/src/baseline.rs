//! PI secondary control with the same inputs and outputs as the adaptive
//! loops.
//!
//! Errors are `e_v = 1 - v_bar_pu` and `e_i = i_ref_pu - i_pu`. A positive
//! error must lower the droop (more current, higher bus), so both outputs
//! are `-(kp e + integral of ki e)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PiConfig {
    pub kp_v: f64,
    pub ki_v: f64,
    pub kp_i: f64,
    pub ki_i: f64,
    /// Anti-windup bound on each integrator (ohm).
    pub clamp: f64,
}

impl Default for PiConfig {
    fn default() -> Self {
        Self {
            kp_v: 0.0,
            ki_v: 300.0,
            kp_i: 0.0,
            ki_i: 13.0,
            clamp: 20.0,
        }
    }
}

impl PiConfig {
    pub fn validate(&self) -> Result<()> {
        let gains = [self.kp_v, self.ki_v, self.kp_i, self.ki_i];
        if !gains.iter().all(|g| g.is_finite()) {
            return Err(Error::invalid("PI gains must be finite"));
        }
        if !(self.clamp > 0.0 && self.clamp.is_finite()) {
            return Err(Error::invalid("PI integrator clamp must be positive"));
        }
        Ok(())
    }
}

/// Integrator states (ohm).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct PiState {
    pub integ_v: f64,
    pub integ_i: f64,
}

/// One PI update; returns `(R_V, R_I)`.
pub fn pi_step(state: &mut PiState, config: &PiConfig, e_v: f64, e_i: f64, dt: f64) -> (f64, f64) {
    let c = config.clamp;
    state.integ_v = (state.integ_v - config.ki_v * e_v * dt).clamp(-c, c);
    state.integ_i = (state.integ_i - config.ki_i * e_i * dt).clamp(-c, c);
    (
        -config.kp_v * e_v + state.integ_v,
        -config.kp_i * e_i + state.integ_i,
    )
}
