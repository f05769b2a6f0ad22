//! Scenario runner: couples the plant, the communication network and the
//! secondary controllers on a fixed time grid.
//!
//! Per plant step `k` (time `t = k * plant_dt`) the loop
//!
//! 1. enables the control loops of every event with `event.t <= t`,
//! 2. on control ticks, publishes each node's per-unit measurements, delivers
//!    due messages and updates every node's droop,
//! 3. records a trace row on record ticks,
//! 4. switches the load for events with `event.t <= t`,
//! 5. advances the plant by one step with the droops held.
//!
//! Samples taken at an event instant therefore see the plant just before a
//! load switch; the bus is algebraic and jumps with the load, and that jump
//! decays within a fraction of a millisecond through the feeder inductances.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{self, IseWindow};
use crate::mrac::CrmController;
use crate::plant::{self, PlantState};
use crate::scenario::{ticks, ControllerKind, EventAction, NodeSel, Scenario};
use crate::secondary::{DscNode, LoopKind, Measurement, Message, Network, NodeController, NodeEvent, PiNode};
use crate::trace::{Trace, TraceRecord};

const EVENT_EPS: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub trace: Trace,
    pub summary: Summary,
    pub events: Vec<NodeEvent>,
}

/// Values averaged over the last `steady_window` of an interval.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Steady {
    pub i_line: Vec<f64>,
    pub v_bus: f64,
    pub droop: Vec<f64>,
}

/// Response to the events applied at one instant, up to the next event.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Segment {
    pub t_event: f64,
    pub t_end: f64,
    pub actions: Vec<String>,
    pub i_line_before: Vec<f64>,
    pub v_bus_before: f64,
    pub steady: Steady,
    /// Time from the event until the signal stays inside a band of
    /// `settle_band * |steady - before|` around its steady value. `None` if
    /// it is still outside the band within the final averaging window.
    pub settling_i: Vec<Option<f64>>,
    pub settling_v: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IseEntry {
    pub t_start: f64,
    pub t_end: f64,
    pub ise_v: f64,
    pub ise_i: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub name: String,
    pub controller: ControllerKind,
    pub duration: f64,
    pub plant_steps: usize,
    pub initial: Steady,
    pub steady: Steady,
    pub segments: Vec<Segment>,
    pub ise: Vec<IseEntry>,
    /// Plant steps during which a constant-power load hit its current floor.
    pub load_clamped_steps: usize,
    pub faults: Vec<NodeEvent>,
    /// Extremes of the adaptive controllers' internal signals over all
    /// control ticks; `None` for the PI baseline.
    pub bounds: Option<ControllerBounds>,
}

/// Worst-case projection and normalisation ratios seen during a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ControllerBounds {
    /// max `|[theta, k]| / m_theta`.
    pub theta_ratio: f64,
    /// max `|b_hat| / m_b`.
    pub b_ratio: f64,
    pub min_m: f64,
    /// max `|phi_n| / m`.
    pub phi_n_ratio: f64,
    /// max `|u_n| / m`.
    pub u_n_ratio: f64,
}

impl Default for ControllerBounds {
    fn default() -> Self {
        Self {
            theta_ratio: 0.0,
            b_ratio: 0.0,
            min_m: f64::INFINITY,
            phi_n_ratio: 0.0,
            u_n_ratio: 0.0,
        }
    }
}

impl ControllerBounds {
    pub fn observe(&mut self, c: &CrmController) {
        let s = c.state();
        let cfg = c.config();
        let phi = s.phi_n[0].hypot(s.phi_n[1]);
        let m = (1.0 + phi * phi + s.u_n * s.u_n).sqrt();
        self.theta_ratio = self.theta_ratio.max(s.theta[0].hypot(s.theta[1]) / cfg.m_theta);
        self.b_ratio = self.b_ratio.max(s.b_hat.abs() / cfg.m_b);
        self.min_m = self.min_m.min(m);
        self.phi_n_ratio = self.phi_n_ratio.max(phi / m);
        self.u_n_ratio = self.u_n_ratio.max(s.u_n.abs() / m);
    }
}

impl Summary {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Trace(e.to_string()))
    }
}

/// Runs a validated scenario to completion.
pub fn run(sc: &Scenario) -> Result<RunOutput> {
    sc.validate()?;
    let dt = sc.timing.plant_dt;
    let control_every = ticks(sc.timing.control_period, dt, "control_period")?;
    let record_every = ticks(sc.timing.record_interval, dt, "record_interval")?;
    let control_dt = control_every as f64 * dt;
    let n_steps = (sc.duration / dt).round() as usize;

    let mut params = sc.plant_params()?;
    let n = params.n();
    let mut droops = params.initial_droops();
    let mut state = plant::operating_point(&params, &droops)?;

    let graph = sc.graph()?;
    let mut network = Network::new(graph.clone(), sc.network.delay)?;
    let mut nodes = build_nodes(sc, &params)?;

    let mut trace = Trace::new(n);
    let mut events = Vec::new();
    let mut next_event = 0usize;
    let mut clamped_steps = 0usize;
    let mut outgoing = Vec::with_capacity(n);
    let mut bounds = match sc.controller {
        ControllerKind::Adaptive => Some(ControllerBounds::default()),
        ControllerKind::Pi => None,
    };

    for k in 0..=n_steps {
        let t = k as f64 * dt;

        let due = sc.events[next_event..]
            .iter()
            .take_while(|ev| ev.t <= t + EVENT_EPS)
            .count();
        let due = &sc.events[next_event..next_event + due];
        next_event += due.len();
        for ev in due {
            match &ev.action {
                EventAction::EnableCurrentLoop { node } => enable(&mut nodes, *node, LoopKind::Current),
                EventAction::EnableVoltageLoop { node } => enable(&mut nodes, *node, LoopKind::Voltage),
                EventAction::SetLoad { .. } => {}
            }
        }

        if k % control_every == 0 {
            outgoing.clear();
            for (i, node) in nodes.iter().enumerate() {
                let (i_pu, v_pu) = node.per_unit(state.i_line[i], state.v_bus);
                outgoing.push(Message {
                    sender: i,
                    v_pu,
                    i_pu,
                    sent_at: t,
                });
            }
            let delivered = network.tick(&outgoing, t).map_err(|e| fault(t, e))?;
            for (i, node) in nodes.iter_mut().enumerate() {
                let meas = Measurement {
                    i: state.i_line[i],
                    v: state.v_bus,
                };
                let out = node.tick(&graph, &delivered[i], meas, control_dt, &mut events);
                droops[i] = out.droop;
                if let (Some(b), NodeController::Adaptive(dsc)) = (bounds.as_mut(), &*node) {
                    b.observe(dsc.voltage_controller());
                    b.observe(dsc.current_controller());
                }
            }
        }

        if k % record_every == 0 || k == n_steps {
            trace.push(record(t, &state, &nodes))?;
        }
        if k == n_steps {
            break;
        }

        let mut load_changed = false;
        for ev in due {
            if let EventAction::SetLoad { load } = &ev.action {
                params.load = *load;
                load_changed = true;
            }
        }
        if load_changed {
            state = PlantState::from_dynamic(state.v_conv, state.i_line, &params.load)
                .map_err(|e| fault(t, e))?;
        }

        let next = plant::step(&state, &droops, &params, dt).map_err(|e| fault(t, e))?;
        clamped_steps += usize::from(next.load_clamped);
        state = next.state;
    }

    let mut summary = summarize(sc, &trace, n_steps, clamped_steps, events.clone())?;
    summary.bounds = bounds;
    Ok(RunOutput { trace, summary, events })
}

fn build_nodes(sc: &Scenario, params: &plant::PlantParams) -> Result<Vec<NodeController>> {
    let n = params.n();
    let v_base = sc.plant.v_nominal;
    params
        .converters
        .iter()
        .enumerate()
        .map(|(i, c)| {
            Ok(match sc.controller {
                ControllerKind::Adaptive => NodeController::Adaptive(DscNode::new(
                    i,
                    n,
                    c.r_d0,
                    c.i_rated,
                    v_base,
                    sc.adaptive.voltage.clone(),
                    sc.adaptive.current.clone(),
                )?),
                ControllerKind::Pi => {
                    NodeController::Pi(PiNode::new(i, n, c.r_d0, c.i_rated, v_base, sc.pi.clone())?)
                }
            })
        })
        .collect()
}

fn enable(nodes: &mut [NodeController], sel: NodeSel, which: LoopKind) {
    match sel {
        NodeSel::All => nodes.iter_mut().for_each(|n| n.enable(which)),
        NodeSel::Node(i) => nodes[i].enable(which),
    }
}

fn fault(t: f64, err: Error) -> Error {
    match err {
        Error::SimulationFault { .. } => err,
        other => Error::SimulationFault {
            t,
            reason: other.to_string(),
        },
    }
}

fn record(t: f64, state: &PlantState, nodes: &[NodeController]) -> TraceRecord {
    let n = nodes.len();
    let mut rec = TraceRecord {
        t,
        v_conv: state.v_conv.clone(),
        i_line: state.i_line.clone(),
        droop: Vec::with_capacity(n),
        r_v: Vec::with_capacity(n),
        r_i: Vec::with_capacity(n),
        i_pu: Vec::with_capacity(n),
        i_ref_pu: Vec::with_capacity(n),
        v_bus: state.v_bus,
        v_bar_pu: Vec::with_capacity(n),
        i_load: state.i_load,
    };
    for (i, node) in nodes.iter().enumerate() {
        let out = node.last_output();
        let (i_pu, v_pu) = node.per_unit(state.i_line[i], state.v_bus);
        let refs = node.references();
        rec.droop.push(out.droop);
        rec.r_v.push(out.r_v);
        rec.r_i.push(out.r_i);
        rec.i_pu.push(i_pu);
        rec.i_ref_pu.push(refs.map_or(i_pu, |r| r.i_ref_pu));
        rec.v_bar_pu.push(refs.map_or(v_pu, |r| r.v_bar_pu));
    }
    rec
}

fn summarize(
    sc: &Scenario,
    trace: &Trace,
    plant_steps: usize,
    load_clamped_steps: usize,
    faults: Vec<NodeEvent>,
) -> Result<Summary> {
    let recs = trace.records();
    let first = recs.first().ok_or_else(|| Error::Trace("empty trace".into()))?;
    let win = sc.metrics.steady_window;

    let mut instants: Vec<(f64, Vec<String>)> = Vec::new();
    for ev in &sc.events {
        let label = action_label(&ev.action);
        match instants.last_mut() {
            Some((t, labels)) if (*t - ev.t).abs() <= EVENT_EPS => labels.push(label),
            _ => instants.push((ev.t, vec![label])),
        }
    }

    let segments = instants
        .iter()
        .enumerate()
        .map(|(j, (t_event, actions))| {
            let t_end = instants.get(j + 1).map_or(sc.duration, |(t, _)| *t);
            segment(recs, *t_event, t_end, actions.clone(), win, sc.metrics.settle_band)
        })
        .collect();

    let ise = sc
        .ise_windows()?
        .iter()
        .map(|w: &IseWindow| {
            Ok(IseEntry {
                t_start: w.t_start,
                t_end: w.t_end,
                ise_v: metrics::ise_v(trace, w)?,
                ise_i: metrics::ise_i(trace, w)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Summary {
        name: sc.name.clone(),
        controller: sc.controller,
        duration: sc.duration,
        plant_steps,
        initial: Steady {
            i_line: first.i_line.clone(),
            v_bus: first.v_bus,
            droop: first.droop.clone(),
        },
        steady: steady(recs, sc.duration, win),
        segments,
        ise,
        load_clamped_steps,
        faults,
        bounds: None,
    })
}

fn action_label(action: &EventAction) -> String {
    let sel = |s: &NodeSel| match s {
        NodeSel::All => "all".to_string(),
        NodeSel::Node(i) => (i + 1).to_string(),
    };
    match action {
        EventAction::EnableCurrentLoop { node } => format!("enable_current_loop({})", sel(node)),
        EventAction::EnableVoltageLoop { node } => format!("enable_voltage_loop({})", sel(node)),
        EventAction::SetLoad { load } => format!("set_load({load:?})"),
    }
}

/// Mean of the records in `(t_end - window, t_end]`.
fn steady(recs: &[TraceRecord], t_end: f64, window: f64) -> Steady {
    let sel: Vec<&TraceRecord> = recs
        .iter()
        .filter(|r| r.t > t_end - window - EVENT_EPS && r.t <= t_end + EVENT_EPS)
        .collect();
    let n = recs[0].i_line.len();
    let count = sel.len().max(1) as f64;
    let mean = |f: &dyn Fn(&TraceRecord) -> f64| sel.iter().map(|r| f(r)).sum::<f64>() / count;
    Steady {
        i_line: (0..n).map(|k| mean(&|r| r.i_line[k])).collect(),
        v_bus: mean(&|r| r.v_bus),
        droop: (0..n).map(|k| mean(&|r| r.droop[k])).collect(),
    }
}

fn segment(
    recs: &[TraceRecord],
    t_event: f64,
    t_end: f64,
    actions: Vec<String>,
    window: f64,
    band: f64,
) -> Segment {
    let before = recs
        .iter()
        .take_while(|r| r.t <= t_event + EVENT_EPS)
        .last()
        .unwrap_or(&recs[0]);
    let steady = steady(recs, t_end, window);
    let inside: Vec<&TraceRecord> = recs
        .iter()
        .filter(|r| r.t >= t_event - EVENT_EPS && r.t <= t_end + EVENT_EPS)
        .collect();
    let settle = |f: &dyn Fn(&TraceRecord) -> f64, before: f64, fin: f64| -> Option<f64> {
        let tol = band * (fin - before).abs();
        match inside.iter().rev().find(|r| (f(r) - fin).abs() > tol) {
            None => Some(0.0),
            Some(r) if r.t > t_end - window => None,
            Some(r) => Some(r.t - t_event),
        }
    };
    let n = steady.i_line.len();
    Segment {
        t_event,
        t_end,
        actions,
        i_line_before: before.i_line.clone(),
        v_bus_before: before.v_bus,
        settling_i: (0..n)
            .map(|k| settle(&|r| r.i_line[k], before.i_line[k], steady.i_line[k]))
            .collect(),
        settling_v: settle(&|r| r.v_bus, before.v_bus, steady.v_bus),
        steady,
    }
}
