//! First-order sensitivity models of bus voltage and feeder current with
//! respect to a droop perturbation, with a finite-difference check against
//! the full plant.
//!
//! With the converter voltage loop taken as `1 / (1 + tau_v s)`:
//!
//! ```text
//! v_b / r_d  = -i / (1 + tau_v s)                       (feeder current held)
//! i   / r_d  = -i / (R_d + r + l s) / (1 + tau_v s)      (bus voltage held)
//!           ~= -(i / (R_d + r)) / (1 + (l / (R_d + r) + tau_v) s)
//! ```
//!
//! The second line collapses the two current-path poles into one; that
//! reduced form is what the adaptive current loop assumes, and it is what
//! [`current_sensitivity`] returns.

use crate::error::{Error, Result};
use crate::plant::{self, ConverterParams, LineParams, LoadModel, PlantParams, PlantState};

/// `b / (s - a)` with `a < 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FirstOrderTf {
    pub gain_b: f64,
    pub pole_a: f64,
}

impl FirstOrderTf {
    pub fn new(gain_b: f64, pole_a: f64) -> Result<Self> {
        if !(pole_a < 0.0 && pole_a.is_finite() && gain_b.is_finite()) {
            return Err(Error::invalid(format!(
                "first-order model needs a finite negative pole, got {pole_a}"
            )));
        }
        Ok(Self { gain_b, pole_a })
    }

    pub fn dc_gain(&self) -> f64 {
        -self.gain_b / self.pole_a
    }

    pub fn time_constant(&self) -> f64 {
        -1.0 / self.pole_a
    }
}

/// Quiescent point of one converter feeder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatingPoint {
    /// Feeder current (A).
    pub i_op: f64,
    /// Droop resistance (ohm).
    pub r_d: f64,
    pub line: LineParams,
    /// Converter voltage-loop time constant (s).
    pub tau_v: f64,
}

impl OperatingPoint {
    /// Operating point of converter `k` in a plant state.
    pub fn from_plant(params: &PlantParams, state: &PlantState, droops: &[f64], k: usize) -> Self {
        Self {
            i_op: state.i_line[k],
            r_d: droops[k],
            line: params.lines[k],
            tau_v: params.converters[k].tau_v,
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = [self.i_op, self.r_d, self.tau_v].iter().all(|x| x.is_finite());
        if !finite || self.tau_v <= 0.0 {
            return Err(Error::invalid("operating point must be finite with tau_v > 0"));
        }
        self.line.validate()
    }
}

/// Bus-voltage response to a droop change with the feeder current held.
pub fn voltage_sensitivity(op: &OperatingPoint) -> Result<FirstOrderTf> {
    op.validate()?;
    FirstOrderTf::new(-op.i_op / op.tau_v, -1.0 / op.tau_v)
}

/// Feeder-current response to a droop change with the bus voltage held
/// (reduced first-order form).
pub fn current_sensitivity(op: &OperatingPoint) -> Result<FirstOrderTf> {
    op.validate()?;
    let r_total = op.r_d + op.line.r;
    if r_total <= 0.0 {
        return Err(Error::invalid(format!(
            "current model requires R_d + r > 0, got {r_total}"
        )));
    }
    let dc = -op.i_op / r_total;
    let tau = op.line.l / r_total + op.tau_v;
    FirstOrderTf::new(dc / tau, -1.0 / tau)
}

/// Relative errors of the finite-difference plant sensitivities against the
/// analytic DC gains.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensitivityCheck {
    pub voltage_fd: f64,
    pub voltage_analytic: f64,
    pub current_fd: f64,
    pub current_analytic: f64,
}

impl SensitivityCheck {
    pub fn voltage_rel_error(&self) -> f64 {
        rel_err(self.voltage_fd, self.voltage_analytic)
    }

    pub fn current_rel_error(&self) -> f64 {
        rel_err(self.current_fd, self.current_analytic)
    }
}

fn rel_err(x: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        x.abs()
    } else {
        ((x - reference) / reference).abs()
    }
}

const SETTLE_WINDOW: f64 = 0.1;
const SETTLE_TOL: f64 = 1e-4;
const SETTLE_MAX: f64 = 10.0;

/// Central finite differences of the plant's steady state in the droop.
///
/// Each gain is measured on a single feeder under the condition its model
/// assumes: the voltage gain with a constant-current load drawing `i_op`
/// (feeder current held), the current gain with the bus pinned at the
/// operating bus voltage (bus voltage held). The plant is run from the
/// unperturbed operating point to steady state for `r_d +/- perturbation`.
pub fn validate_against_plant(op: &OperatingPoint, perturbation: f64) -> Result<SensitivityCheck> {
    op.validate()?;
    let r_total = op.r_d + op.line.r;
    if !(perturbation > 0.0) || perturbation > 0.01 * r_total.abs() {
        return Err(Error::invalid(format!(
            "perturbation must be in (0, 1% of R_d + r], got {perturbation}"
        )));
    }
    let v_ref = plant::V_NOMINAL;
    let conv = ConverterParams::new(v_ref, op.tau_v, op.i_op.abs().max(1.0), op.r_d)?;

    // the stiff constant-current load lets v_bus / STIFF_GAIN through on
    // top of its demand; offset the demand so the feeder carries i_op
    let v_bus_op = v_ref - r_total * op.i_op;
    let held_current = PlantParams::new(
        vec![conv],
        vec![op.line],
        LoadModel::ConstantCurrent {
            amps: op.i_op - v_bus_op / plant::STIFF_GAIN,
        },
    )?;
    let v_plus = settle(&held_current, op.r_d + perturbation)?.v_bus;
    let v_minus = settle(&held_current, op.r_d - perturbation)?.v_bus;

    let held_bus = PlantParams::new(
        vec![conv],
        vec![op.line],
        LoadModel::VoltageSource { volts: v_bus_op },
    )?;
    let i_plus = settle(&held_bus, op.r_d + perturbation)?.i_line[0];
    let i_minus = settle(&held_bus, op.r_d - perturbation)?.i_line[0];

    Ok(SensitivityCheck {
        voltage_fd: (v_plus - v_minus) / (2.0 * perturbation),
        voltage_analytic: voltage_sensitivity(op)?.dc_gain(),
        current_fd: (i_plus - i_minus) / (2.0 * perturbation),
        current_analytic: current_sensitivity(op)?.dc_gain(),
    })
}

/// Runs the plant from its unperturbed operating point with the given droop
/// until every signal stays within `SETTLE_TOL` (relative) over a
/// `SETTLE_WINDOW` window.
fn settle(params: &PlantParams, droop: f64) -> Result<PlantState> {
    let dt = plant::DEFAULT_DT;
    let mut state = plant::operating_point(params, &params.initial_droops())?;
    let window = (SETTLE_WINDOW / dt).round() as usize;
    let steps = (SETTLE_MAX / dt).round() as usize;
    let droops = [droop];
    let mut anchor = state.clone();
    let mut stable_for = 0usize;
    for _ in 0..steps {
        state = plant::step(&state, &droops, params, dt)?.state;
        let close = |a: f64, b: f64| (a - b).abs() <= SETTLE_TOL * b.abs().max(1e-9);
        if close(state.v_bus, anchor.v_bus) && close(state.i_line[0], anchor.i_line[0]) {
            stable_for += 1;
            if stable_for >= window {
                return Ok(state);
            }
        } else {
            anchor = state.clone();
            stable_for = 0;
        }
    }
    Err(Error::NotSettled(SETTLE_MAX))
}
