//! Continuous-time model of an N-converter, single-bus DC microgrid.
//!
//! Each converter regulates its output voltage towards a drooped reference
//! `v_ref - R_d * i` through a first-order voltage loop, and feeds the common
//! bus through a series RL cable. The bus voltage is an algebraic function of
//! the total line current and the load model, so the only dynamic states are
//! the converter output voltages and the line currents.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nominal bus voltage of the reference system.
pub const V_NOMINAL: f64 = 400.0;
/// Default plant integration step.
pub const DEFAULT_DT: f64 = 1e-4;
/// Largest accepted plant integration step.
pub const DT_MAX: f64 = 1e-3;
/// Below this total current a constant-power load is evaluated at the floor.
pub const I_FLOOR: f64 = 0.05;
/// Bus stiffness (volts per amp of unmet demand) used to realise a
/// constant-current load with a single algebraic bus equation.
pub const STIFF_GAIN: f64 = 1e3;

// |h * lambda| kept below this inside the RK4 stability interval (~2.78).
const RK4_STABLE_STEP: f64 = 2.5;
/// Sub-step budget per plant step; needing more is reported as a fault.
pub const MAX_SUBSTEPS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConverterParams {
    /// Initial voltage reference (V).
    pub v_ref: f64,
    /// Voltage-loop time constant (s).
    pub tau_v: f64,
    /// Per-unit current base (A).
    pub i_rated: f64,
    /// Initial droop resistance (ohm).
    pub r_d0: f64,
}

impl ConverterParams {
    pub fn new(v_ref: f64, tau_v: f64, i_rated: f64, r_d0: f64) -> Result<Self> {
        let p = Self {
            v_ref,
            tau_v,
            i_rated,
            r_d0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Builds a converter whose current base is `rated_power / v_nominal`.
    pub fn from_rating(
        v_ref: f64,
        tau_v: f64,
        rated_power: f64,
        v_nominal: f64,
        r_d0: f64,
    ) -> Result<Self> {
        if !(rated_power > 0.0 && v_nominal > 0.0) {
            return Err(Error::invalid("rated power and nominal voltage must be positive"));
        }
        Self::new(v_ref, tau_v, rated_power / v_nominal, r_d0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_v > 0.0 && self.tau_v.is_finite()) {
            return Err(Error::invalid(format!("tau_v must be positive, got {}", self.tau_v)));
        }
        if !(self.i_rated > 0.0 && self.i_rated.is_finite()) {
            return Err(Error::invalid(format!(
                "i_rated must be positive, got {}",
                self.i_rated
            )));
        }
        if !(self.v_ref > 0.0 && self.v_ref.is_finite()) {
            return Err(Error::invalid(format!("v_ref must be positive, got {}", self.v_ref)));
        }
        if !self.r_d0.is_finite() {
            return Err(Error::invalid("r_d0 must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineParams {
    /// Series resistance (ohm).
    pub r: f64,
    /// Series inductance (H).
    pub l: f64,
}

impl LineParams {
    pub fn new(r: f64, l: f64) -> Result<Self> {
        let p = Self { r, l };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r.is_finite() && self.l > 0.0 && self.l.is_finite()) {
            return Err(Error::invalid(format!(
                "line r and l must be positive, got r = {}, l = {}",
                self.r, self.l
            )));
        }
        Ok(())
    }
}

/// Load connected to the common bus.
///
/// `VoltageSource` pins the bus to a fixed voltage and absorbs whatever the
/// feeders deliver; it is used to hold the bus constant in sensitivity
/// experiments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LoadModel {
    Resistive { ohms: f64 },
    ConstantPower { watts: f64 },
    ConstantCurrent { amps: f64 },
    VoltageSource { volts: f64 },
}

impl LoadModel {
    /// Resistive load drawing `power` at `voltage`.
    pub fn resistive_at(power: f64, voltage: f64) -> Result<Self> {
        if !(power > 0.0 && voltage > 0.0) {
            return Err(Error::invalid("power and voltage must be positive"));
        }
        Ok(LoadModel::Resistive {
            ohms: voltage * voltage / power,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LoadModel::Resistive { ohms } => ohms > 0.0 && ohms.is_finite(),
            LoadModel::ConstantPower { watts } => watts >= 0.0 && watts.is_finite(),
            LoadModel::ConstantCurrent { amps } => amps >= 0.0 && amps.is_finite(),
            LoadModel::VoltageSource { volts } => volts.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid load {self:?}")))
        }
    }

    /// |dV_bus / d i_total| at the given total current.
    fn incremental_resistance(&self, i_total: f64) -> f64 {
        match *self {
            LoadModel::Resistive { ohms } => ohms,
            LoadModel::ConstantPower { watts } => {
                let i = i_total.max(I_FLOOR);
                watts / (i * i)
            }
            LoadModel::ConstantCurrent { .. } => STIFF_GAIN,
            LoadModel::VoltageSource { .. } => 0.0,
        }
    }
}

/// Bus voltage together with the constant-power floor flag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BusVoltage {
    pub volts: f64,
    /// The constant-power load was evaluated at `I_FLOOR`.
    pub clamped: bool,
}

/// Algebraic bus voltage for a given total feeder current.
pub fn bus_voltage(i_total: f64, load: &LoadModel) -> Result<BusVoltage> {
    if !i_total.is_finite() {
        return Err(Error::NonFinite(format!("total line current {i_total}")));
    }
    let (volts, clamped) = match *load {
        LoadModel::Resistive { ohms } => (ohms * i_total, false),
        LoadModel::ConstantPower { watts } => {
            if i_total < I_FLOOR {
                // resistive at the floor operating point
                (watts / (I_FLOOR * I_FLOOR) * i_total, true)
            } else {
                (watts / i_total, false)
            }
        }
        LoadModel::ConstantCurrent { amps } => (STIFF_GAIN * (i_total - amps), false),
        LoadModel::VoltageSource { volts } => (volts, false),
    };
    Ok(BusVoltage { volts, clamped })
}

/// Converters, feeders and load of one microgrid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    pub converters: Vec<ConverterParams>,
    pub lines: Vec<LineParams>,
    pub load: LoadModel,
}

impl PlantParams {
    pub fn new(
        converters: Vec<ConverterParams>,
        lines: Vec<LineParams>,
        load: LoadModel,
    ) -> Result<Self> {
        let p = Self {
            converters,
            lines,
            load,
        };
        p.validate()?;
        Ok(p)
    }

    /// Two-converter laboratory system: 4 kW and 2 kW converters at 400 V,
    /// 5 ms voltage loops, 0.5 ohm / 3 mH cables, droops of 1 and 2 ohm.
    pub fn reference_system(load: LoadModel) -> Self {
        let conv = |power: f64, r_d0: f64| ConverterParams {
            v_ref: V_NOMINAL,
            tau_v: 5e-3,
            i_rated: power / V_NOMINAL,
            r_d0,
        };
        let line = LineParams { r: 0.5, l: 3e-3 };
        Self {
            converters: vec![conv(4000.0, 1.0), conv(2000.0, 2.0)],
            lines: vec![line, line],
            load,
        }
    }

    pub fn n(&self) -> usize {
        self.converters.len()
    }

    pub fn initial_droops(&self) -> Vec<f64> {
        self.converters.iter().map(|c| c.r_d0).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.converters.is_empty() {
            return Err(Error::invalid("plant needs at least one converter"));
        }
        if self.converters.len() != self.lines.len() {
            return Err(Error::invalid(format!(
                "{} converters but {} lines",
                self.converters.len(),
                self.lines.len()
            )));
        }
        for c in &self.converters {
            c.validate()?;
        }
        for l in &self.lines {
            l.validate()?;
        }
        self.load.validate()
    }

    /// Upper bound on the Jacobian spectral radius (Gershgorin rows).
    fn stiffness_bound(&self, droops: &[f64], i_total: f64) -> f64 {
        let n = self.n() as f64;
        let r_inc = self.load.incremental_resistance(i_total);
        let lines = self
            .lines
            .iter()
            .map(|l| (l.r + n * r_inc + 1.0) / l.l)
            .fold(0.0, f64::max);
        let convs = self
            .converters
            .iter()
            .zip(droops)
            .map(|(c, rd)| (1.0 + rd.abs()) / c.tau_v)
            .fold(0.0, f64::max);
        lines.max(convs)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantState {
    /// Converter output voltages (V).
    pub v_conv: Vec<f64>,
    /// Feeder currents (A).
    pub i_line: Vec<f64>,
    /// Common bus voltage (V), algebraic.
    pub v_bus: f64,
    /// Load current (A), always the sum of `i_line`.
    pub i_load: f64,
}

impl PlantState {
    pub fn zeros(n: usize) -> Self {
        Self {
            v_conv: vec![0.0; n],
            i_line: vec![0.0; n],
            v_bus: 0.0,
            i_load: 0.0,
        }
    }

    /// Builds a state from its dynamic part, recomputing the algebraic bus.
    pub fn from_dynamic(v_conv: Vec<f64>, i_line: Vec<f64>, load: &LoadModel) -> Result<Self> {
        let i_load = total(&i_line);
        let bus = bus_voltage(i_load, load)?;
        Ok(Self {
            v_conv,
            i_line,
            v_bus: bus.volts,
            i_load,
        })
    }

    pub fn n(&self) -> usize {
        self.v_conv.len()
    }

    pub fn is_finite(&self) -> bool {
        self.v_conv.iter().chain(&self.i_line).all(|x| x.is_finite())
            && self.v_bus.is_finite()
            && self.i_load.is_finite()
    }
}

fn total(xs: &[f64]) -> f64 {
    xs.iter().sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Derivatives {
    pub dv_conv: Vec<f64>,
    pub di_line: Vec<f64>,
}

fn check_droops(droops: &[f64], params: &PlantParams) -> Result<()> {
    if droops.len() != params.n() {
        return Err(Error::invalid(format!(
            "expected {} droops, got {}",
            params.n(),
            droops.len()
        )));
    }
    if let Some(d) = droops.iter().find(|d| !d.is_finite()) {
        return Err(Error::NonFinite(format!("droop {d}")));
    }
    Ok(())
}

/// Time derivatives of converter voltages and line currents.
///
/// The bus voltage is re-evaluated from the line currents in `state`; the
/// stored `state.v_bus` is ignored.
pub fn derivatives(state: &PlantState, droops: &[f64], params: &PlantParams) -> Result<Derivatives> {
    check_droops(droops, params)?;
    let n = params.n();
    if state.n() != n || state.i_line.len() != n {
        return Err(Error::invalid("state dimension does not match plant"));
    }
    let mut dv_conv = vec![0.0; n];
    let mut di_line = vec![0.0; n];
    eval_rhs(params, droops, &state.v_conv, &state.i_line, &mut dv_conv, &mut di_line)?;
    Ok(Derivatives { dv_conv, di_line })
}

fn eval_rhs(
    params: &PlantParams,
    droops: &[f64],
    v: &[f64],
    i: &[f64],
    dv: &mut [f64],
    di: &mut [f64],
) -> Result<bool> {
    let bus = bus_voltage(total(i), &params.load)?;
    for k in 0..params.n() {
        let c = &params.converters[k];
        let line = &params.lines[k];
        dv[k] = ((c.v_ref - droops[k] * i[k]) - v[k]) / c.tau_v;
        di[k] = (v[k] - bus.volts - line.r * i[k]) / line.l;
    }
    Ok(bus.clamped)
}

/// Result of one integration step.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub state: PlantState,
    /// A constant-power load hit its current floor during the step.
    pub load_clamped: bool,
}

/// Advances the plant by `dt` with droops held constant.
///
/// Classical fourth-order Runge-Kutta. When the feeder/load time constants
/// are too fast for `dt`, the step is split into equal RK4 sub-steps so the
/// integration stays inside the RK4 stability region.
pub fn step(state: &PlantState, droops: &[f64], params: &PlantParams, dt: f64) -> Result<Step> {
    if !(dt > 0.0 && dt <= DT_MAX) {
        return Err(Error::invalid(format!("dt must be in (0, {DT_MAX}], got {dt}")));
    }
    check_droops(droops, params)?;
    if !state.is_finite() {
        return Err(Error::NonFinite("plant state".into()));
    }
    let n = params.n();
    let lambda = params.stiffness_bound(droops, state.i_load);
    let substeps = (dt * lambda / RK4_STABLE_STEP).ceil();
    if !(substeps <= MAX_SUBSTEPS as f64) {
        return Err(Error::invalid(format!(
            "plant too stiff for dt = {dt}: needs {substeps} sub-steps"
        )));
    }
    let substeps = (substeps as usize).max(1);
    let h = dt / substeps as f64;

    let mut x: Vec<f64> = state.v_conv.iter().chain(&state.i_line).copied().collect();
    let mut clamped = false;
    let mut k = [vec![0.0; 2 * n], vec![0.0; 2 * n], vec![0.0; 2 * n], vec![0.0; 2 * n]];
    let mut tmp = vec![0.0; 2 * n];

    let rhs = |x: &[f64], out: &mut [f64]| -> Result<bool> {
        let (dv, di) = out.split_at_mut(n);
        eval_rhs(params, droops, &x[..n], &x[n..], dv, di)
    };

    for _ in 0..substeps {
        clamped |= rhs(&x, &mut k[0])?;
        for j in 0..2 * n {
            tmp[j] = x[j] + 0.5 * h * k[0][j];
        }
        clamped |= rhs(&tmp, &mut k[1])?;
        for j in 0..2 * n {
            tmp[j] = x[j] + 0.5 * h * k[1][j];
        }
        clamped |= rhs(&tmp, &mut k[2])?;
        for j in 0..2 * n {
            tmp[j] = x[j] + h * k[2][j];
        }
        clamped |= rhs(&tmp, &mut k[3])?;
        for j in 0..2 * n {
            x[j] += h / 6.0 * (k[0][j] + 2.0 * k[1][j] + 2.0 * k[2][j] + k[3][j]);
        }
    }

    let i_line = x.split_off(n);
    let next = PlantState::from_dynamic(x, i_line, &params.load)?;
    if !next.is_finite() {
        return Err(Error::NonFinite("plant state after step".into()));
    }
    Ok(Step {
        state: next,
        load_clamped: clamped,
    })
}

/// DC operating point for fixed droops (all derivatives zero).
///
/// Newton iteration on the feeder currents. For a constant-power load the
/// iteration starts from the nominal-voltage current and therefore lands on
/// the high-voltage solution.
pub fn operating_point(params: &PlantParams, droops: &[f64]) -> Result<PlantState> {
    params.validate()?;
    check_droops(droops, params)?;
    let n = params.n();
    let r_eff: Vec<f64> = (0..n).map(|k| droops[k] + params.lines[k].r).collect();
    let v_mean = params.converters.iter().map(|c| c.v_ref).sum::<f64>() / n as f64;

    let guess_total = match params.load {
        LoadModel::Resistive { ohms } => v_mean / ohms,
        LoadModel::ConstantPower { watts } => watts / v_mean,
        LoadModel::ConstantCurrent { amps } => amps,
        LoadModel::VoltageSource { .. } => 0.0,
    };
    let mut i = DVector::from_element(n, guess_total / n as f64);

    for _ in 0..100 {
        let sum = i.sum();
        let bus = bus_voltage(sum, &params.load)?.volts;
        let slope = match params.load {
            LoadModel::ConstantPower { watts } if sum >= I_FLOOR => -watts / (sum * sum),
            LoadModel::ConstantPower { watts } => watts / (I_FLOOR * I_FLOOR),
            other => other.incremental_resistance(sum),
        };
        let f = DVector::from_fn(n, |k, _| params.converters[k].v_ref - r_eff[k] * i[k] - bus);
        let jac = DMatrix::from_fn(n, n, |a, b| {
            let diag = if a == b { -r_eff[a] } else { 0.0 };
            diag - slope
        });
        let delta = jac
            .lu()
            .solve(&(-&f))
            .ok_or_else(|| Error::invalid("singular operating-point Jacobian"))?;
        i += &delta;
        let scale = i.amax().max(1.0);
        if delta.amax() <= 1e-13 * scale {
            let i_line: Vec<f64> = i.iter().copied().collect();
            let v_conv = (0..n)
                .map(|k| params.converters[k].v_ref - droops[k] * i_line[k])
                .collect();
            return PlantState::from_dynamic(v_conv, i_line, &params.load);
        }
    }
    Err(Error::invalid("operating-point iteration did not converge"))
}

/// Steady-state current ratio `i_1 / i_2` of two converters with equal
/// voltage references.
pub fn steady_state_ratio(r_d1: f64, r_d2: f64, r_1: f64, r_2: f64) -> Result<f64> {
    let d1 = r_d1 + r_1;
    let d2 = r_d2 + r_2;
    if !(d1 > 0.0 && d2 > 0.0) {
        return Err(Error::invalid(format!(
            "droop plus line resistance must be positive, got {d1} and {d2}"
        )));
    }
    Ok(d2 / d1)
}
