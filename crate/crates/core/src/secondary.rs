//! Distributed secondary control.
//!
//! Every converter hosts a secondary controller that exchanges its per-unit
//! bus voltage and per-unit current with its in-neighbours over a directed
//! communication graph. From the delayed neighbour data it forms a current
//! sharing setpoint and an averaged bus voltage, and two adaptive loops turn
//! these into droop corrections:
//!
//! ```text
//! R_d = R_d0 + R_V + R_I
//! ```

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::baseline::{PiConfig, PiState};
use crate::error::{Error, Result};
use crate::mrac::{CrmConfig, CrmController, CrmDiagnostics};

/// Current magnitude below which the plant-gain sign is left unchanged.
pub const SIGN_HYSTERESIS: f64 = 0.05;

/// Slack for comparing delivery times.
const TIME_EPS: f64 = 1e-9;

/// Directed graph; `adjacency[i][j]` is true iff node `i` listens to `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommGraph {
    adjacency: Vec<Vec<bool>>,
}

impl CommGraph {
    /// Builds a graph from `(from, to)` edges over zero-based node ids.
    pub fn from_edges(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = vec![vec![false; n_nodes]; n_nodes];
        for &(from, to) in edges {
            if from >= n_nodes || to >= n_nodes {
                return Err(Error::Config(format!(
                    "edge ({from}, {to}) references a node outside 0..{n_nodes}"
                )));
            }
            if from == to {
                return Err(Error::Config(format!("self-loop on node {from}")));
            }
            adjacency[to][from] = true;
        }
        let g = Self { adjacency };
        g.validate()?;
        Ok(g)
    }

    /// Every node listens to every other node.
    pub fn complete(n_nodes: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n_nodes)
            .flat_map(|i| (0..n_nodes).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        Self::from_edges(n_nodes, &edges)
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.len()
    }

    /// `a_ij`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if self.adjacency[i][j] {
            1.0
        } else {
            0.0
        }
    }

    pub fn in_neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[i]
            .iter()
            .enumerate()
            .filter_map(|(j, &a)| a.then_some(j))
    }

    pub fn out_neighbors(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_nodes()).filter(move |&i| self.adjacency[i][j])
    }

    fn validate(&self) -> Result<()> {
        if self.n_nodes() < 2 {
            return Err(Error::Config("communication graph needs at least two nodes".into()));
        }
        for i in 0..self.n_nodes() {
            if self.adjacency[i][i] {
                return Err(Error::Config(format!("self-loop on node {i}")));
            }
            if self.in_neighbors(i).next().is_none() {
                return Err(Error::Config(format!("node {i} has no in-neighbour")));
            }
        }
        Ok(())
    }
}

/// Per-unit status published by a node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub sender: usize,
    pub v_pu: f64,
    pub i_pu: f64,
    pub sent_at: f64,
}

/// FIFO link with a fixed delay.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayLine {
    delay: f64,
    queue: VecDeque<(f64, Message)>,
}

impl DelayLine {
    pub fn new(delay: f64) -> Result<Self> {
        if !(delay >= 0.0 && delay.is_finite()) {
            return Err(Error::Config(format!("link delay must be >= 0, got {delay}")));
        }
        Ok(Self {
            delay,
            queue: VecDeque::new(),
        })
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn push(&mut self, msg: Message) {
        self.queue.push_back((msg.sent_at + self.delay, msg));
    }

    /// Pops every message due at `now`, oldest first.
    pub fn pop_due(&mut self, now: f64, out: &mut Vec<(f64, Message)>) {
        while let Some(&(at, _)) = self.queue.front() {
            if at > now + TIME_EPS {
                break;
            }
            out.push(self.queue.pop_front().expect("front exists"));
        }
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }
}

/// Simulated communication layer: one delay line per directed edge.
#[derive(Clone, Debug)]
pub struct Network {
    graph: CommGraph,
    // (from, to, line), sorted by (to, from)
    links: Vec<(usize, usize, DelayLine)>,
    last_tick: f64,
}

impl Network {
    pub fn new(graph: CommGraph, delay: f64) -> Result<Self> {
        let mut links = Vec::new();
        for to in 0..graph.n_nodes() {
            for from in graph.in_neighbors(to) {
                links.push((from, to, DelayLine::new(delay)?));
            }
        }
        Ok(Self {
            graph,
            links,
            last_tick: f64::NEG_INFINITY,
        })
    }

    pub fn graph(&self) -> &CommGraph {
        &self.graph
    }

    /// Enqueues `outgoing` on every out-edge of its sender, then returns the
    /// messages due at `now` for each node, ordered by delivery time and
    /// sender id.
    pub fn tick(&mut self, outgoing: &[Message], now: f64) -> Result<Vec<Vec<Message>>> {
        if now < self.last_tick {
            return Err(Error::invalid(format!(
                "network time went backwards: {now} < {}",
                self.last_tick
            )));
        }
        self.last_tick = now;
        for msg in outgoing {
            for (from, _, line) in self.links.iter_mut() {
                if *from == msg.sender {
                    line.push(*msg);
                }
            }
        }
        let mut delivered = vec![Vec::new(); self.graph.n_nodes()];
        let mut due = Vec::new();
        for (_, to, line) in self.links.iter_mut() {
            due.clear();
            line.pop_due(now, &mut due);
            delivered[*to].extend(due.iter().copied());
        }
        Ok(delivered
            .into_iter()
            .map(|mut v: Vec<(f64, Message)>| {
                // stable: FIFO per edge survives equal keys
                v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.sender.cmp(&b.1.sender)));
                v.into_iter().map(|(_, m)| m).collect()
            })
            .collect())
    }
}

/// Sampled signals of one converter at a control tick.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement {
    /// Feeder current (A).
    pub i: f64,
    /// Terminal bus voltage (V).
    pub v: f64,
}

/// Consensus outputs for one node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct References {
    pub i_ref_pu: f64,
    pub v_bar_pu: f64,
}

/// Droop decomposition reported by a node after each tick.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct DroopOutput {
    pub droop: f64,
    pub r_v: f64,
    pub r_i: f64,
}

/// Something a node reports alongside its droop.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum NodeEvent {
    /// A loop raised a controller fault; its parameters are frozen.
    LoopFrozen { node: usize, loop_name: &'static str, reason: String },
}

/// Which adaptive loop a command refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopKind {
    Voltage,
    Current,
}

#[derive(Clone, Debug)]
struct Loop<C> {
    ctrl: C,
    enabled: bool,
    frozen: bool,
    needs_reset: bool,
    output: f64,
}

impl<C> Loop<C> {
    fn new(ctrl: C) -> Self {
        Self {
            ctrl,
            enabled: false,
            frozen: false,
            needs_reset: false,
            output: 0.0,
        }
    }

    fn enable(&mut self) {
        if !self.enabled {
            self.enabled = true;
            self.needs_reset = true;
        }
    }
}

/// Per-unit bases and consensus state shared by both controller flavours.
#[derive(Clone, Debug)]
struct NodeCore {
    id: usize,
    r_d0: f64,
    i_base: f64,
    v_base: f64,
    neighbor: Vec<Option<(f64, f64)>>,
    refs: Option<References>,
}

impl NodeCore {
    fn new(id: usize, n_nodes: usize, r_d0: f64, i_base: f64, v_base: f64) -> Result<Self> {
        if !(i_base > 0.0 && v_base > 0.0) {
            return Err(Error::invalid("per-unit bases must be positive"));
        }
        if id >= n_nodes {
            return Err(Error::invalid(format!("node id {id} outside 0..{n_nodes}")));
        }
        Ok(Self {
            id,
            r_d0,
            i_base,
            v_base,
            neighbor: vec![None; n_nodes],
            refs: None,
        })
    }

    fn per_unit(&self, i: f64, v: f64) -> (f64, f64) {
        (i / self.i_base, v / self.v_base)
    }

    fn consensus(&mut self, graph: &CommGraph, delivered: &[Message], own: (f64, f64)) -> References {
        for m in delivered {
            if m.sender < self.neighbor.len() {
                self.neighbor[m.sender] = Some((m.v_pu, m.i_pu));
            }
        }
        let (own_i, own_v) = own;
        let mut w = 0.0;
        let mut i_sum = 0.0;
        let mut v_sum = 0.0;
        for j in graph.in_neighbors(self.id) {
            if let Some((v, i)) = self.neighbor[j] {
                let a = graph.weight(self.id, j);
                w += a;
                i_sum += a * i;
                v_sum += a * v;
            }
        }
        let refs = if w > 0.0 {
            References {
                i_ref_pu: i_sum / w,
                v_bar_pu: (own_v + v_sum) / (1.0 + w),
            }
        } else {
            // nothing heard yet: hold, starting from the node's own values
            self.refs.unwrap_or(References {
                i_ref_pu: own_i,
                v_bar_pu: own_v,
            })
        };
        self.refs = Some(refs);
        refs
    }
}

/// Adaptive secondary controller of one converter: a voltage CRM loop and a
/// current CRM loop whose outputs add to the initial droop.
#[derive(Clone, Debug)]
pub struct DscNode {
    core: NodeCore,
    v_loop: Loop<CrmController>,
    i_loop: Loop<CrmController>,
    sign: f64,
    last: DroopOutput,
    last_diag: [CrmDiagnostics; 2],
}

impl DscNode {
    pub fn new(
        id: usize,
        n_nodes: usize,
        r_d0: f64,
        i_base: f64,
        v_base: f64,
        v_config: CrmConfig,
        i_config: CrmConfig,
    ) -> Result<Self> {
        let core = NodeCore::new(id, n_nodes, r_d0, i_base, v_base)?;
        Ok(Self {
            core,
            v_loop: Loop::new(CrmController::new(v_config)?),
            i_loop: Loop::new(CrmController::new(i_config)?),
            sign: 1.0,
            last: DroopOutput {
                droop: r_d0,
                ..DroopOutput::default()
            },
            last_diag: [CrmDiagnostics::default(); 2],
        })
    }

    pub fn id(&self) -> usize {
        self.core.id
    }

    pub fn per_unit(&self, i: f64, v: f64) -> (f64, f64) {
        self.core.per_unit(i, v)
    }

    pub fn consensus_references(
        &mut self,
        graph: &CommGraph,
        delivered: &[Message],
        own_i_pu: f64,
        own_v_pu: f64,
    ) -> References {
        self.core.consensus(graph, delivered, (own_i_pu, own_v_pu))
    }

    pub fn enable(&mut self, which: LoopKind) {
        match which {
            LoopKind::Voltage => self.v_loop.enable(),
            LoopKind::Current => self.i_loop.enable(),
        }
    }

    pub fn is_enabled(&self, which: LoopKind) -> bool {
        match which {
            LoopKind::Voltage => self.v_loop.enabled,
            LoopKind::Current => self.i_loop.enabled,
        }
    }

    pub fn voltage_controller(&self) -> &CrmController {
        &self.v_loop.ctrl
    }

    pub fn current_controller(&self) -> &CrmController {
        &self.i_loop.ctrl
    }

    pub fn last_output(&self) -> DroopOutput {
        self.last
    }

    /// Diagnostics of the last voltage and current loop updates.
    pub fn diagnostics(&self) -> [CrmDiagnostics; 2] {
        self.last_diag
    }

    /// Runs both loops for one controller period and returns the droop to
    /// apply until the next tick.
    pub fn dsc_step(
        &mut self,
        meas: Measurement,
        refs: References,
        dt: f64,
        events: &mut Vec<NodeEvent>,
    ) -> DroopOutput {
        if meas.i > SIGN_HYSTERESIS {
            self.sign = -1.0;
        } else if meas.i < -SIGN_HYSTERESIS {
            self.sign = 1.0;
        }
        let (i_pu, _) = self.core.per_unit(meas.i, meas.v);
        let id = self.core.id;

        let sign = self.sign;
        let mut run = |lp: &mut Loop<CrmController>, x: f64, r: f64, name: &'static str, slot: usize| {
            if !lp.enabled {
                return;
            }
            lp.ctrl.set_sign_b(sign);
            if lp.needs_reset {
                lp.ctrl.reset_reference(x);
                lp.needs_reset = false;
            }
            if lp.frozen {
                return;
            }
            match lp.ctrl.update(x, r, dt) {
                Ok((u, diag)) => {
                    lp.output = u;
                    self.last_diag[slot] = diag;
                }
                Err(err) => {
                    lp.frozen = true;
                    events.push(NodeEvent::LoopFrozen {
                        node: id,
                        loop_name: name,
                        reason: err.to_string(),
                    });
                }
            }
        };
        run(&mut self.v_loop, refs.v_bar_pu, 1.0, "voltage", 0);
        run(&mut self.i_loop, i_pu, refs.i_ref_pu, "current", 1);

        let r_v = if self.v_loop.enabled { self.v_loop.output } else { 0.0 };
        let r_i = if self.i_loop.enabled { self.i_loop.output } else { 0.0 };
        self.last = DroopOutput {
            droop: self.core.r_d0 + r_v + r_i,
            r_v,
            r_i,
        };
        self.last
    }
}

/// PI secondary controller fed with the same consensus errors as
/// [`DscNode`].
#[derive(Clone, Debug)]
pub struct PiNode {
    core: NodeCore,
    config: PiConfig,
    state: PiState,
    v_enabled: bool,
    i_enabled: bool,
    last: DroopOutput,
}

impl PiNode {
    pub fn new(id: usize, n_nodes: usize, r_d0: f64, i_base: f64, v_base: f64, config: PiConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            core: NodeCore::new(id, n_nodes, r_d0, i_base, v_base)?,
            config,
            state: PiState::default(),
            v_enabled: false,
            i_enabled: false,
            last: DroopOutput {
                droop: r_d0,
                ..DroopOutput::default()
            },
        })
    }

    pub fn enable(&mut self, which: LoopKind) {
        match which {
            LoopKind::Voltage => self.v_enabled = true,
            LoopKind::Current => self.i_enabled = true,
        }
    }

    pub fn state(&self) -> &PiState {
        &self.state
    }

    pub fn pi_node_step(&mut self, meas: Measurement, refs: References, dt: f64) -> DroopOutput {
        let (i_pu, _) = self.core.per_unit(meas.i, meas.v);
        let e_v = if self.v_enabled { 1.0 - refs.v_bar_pu } else { 0.0 };
        let e_i = if self.i_enabled { refs.i_ref_pu - i_pu } else { 0.0 };
        let (r_v, r_i) = crate::baseline::pi_step(&mut self.state, &self.config, e_v, e_i, dt);
        let r_v = if self.v_enabled { r_v } else { 0.0 };
        let r_i = if self.i_enabled { r_i } else { 0.0 };
        self.last = DroopOutput {
            droop: self.core.r_d0 + r_v + r_i,
            r_v,
            r_i,
        };
        self.last
    }
}

/// Secondary controller of one node, adaptive or PI.
#[derive(Clone, Debug)]
pub enum NodeController {
    Adaptive(DscNode),
    Pi(PiNode),
}

impl NodeController {
    fn core(&self) -> &NodeCore {
        match self {
            NodeController::Adaptive(n) => &n.core,
            NodeController::Pi(n) => &n.core,
        }
    }

    fn core_mut(&mut self) -> &mut NodeCore {
        match self {
            NodeController::Adaptive(n) => &mut n.core,
            NodeController::Pi(n) => &mut n.core,
        }
    }

    pub fn id(&self) -> usize {
        self.core().id
    }

    pub fn per_unit(&self, i: f64, v: f64) -> (f64, f64) {
        self.core().per_unit(i, v)
    }

    pub fn enable(&mut self, which: LoopKind) {
        match self {
            NodeController::Adaptive(n) => n.enable(which),
            NodeController::Pi(n) => n.enable(which),
        }
    }

    pub fn last_output(&self) -> DroopOutput {
        match self {
            NodeController::Adaptive(n) => n.last,
            NodeController::Pi(n) => n.last,
        }
    }

    pub fn references(&self) -> Option<References> {
        self.core().refs
    }

    /// Consensus update followed by one controller period.
    pub fn tick(
        &mut self,
        graph: &CommGraph,
        delivered: &[Message],
        meas: Measurement,
        dt: f64,
        events: &mut Vec<NodeEvent>,
    ) -> DroopOutput {
        let (i_pu, v_pu) = self.per_unit(meas.i, meas.v);
        let refs = self.core_mut().consensus(graph, delivered, (i_pu, v_pu));
        match self {
            NodeController::Adaptive(n) => n.dsc_step(meas, refs, dt, events),
            NodeController::Pi(n) => n.pi_node_step(meas, refs, dt),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn node(id: usize, n: usize, i_base: f64, r_d0: f64) -> DscNode {
        DscNode::new(id, n, r_d0, i_base, 400.0, CrmConfig::default(), CrmConfig::default()).unwrap()
    }

    fn msg(sender: usize, v_pu: f64, i_pu: f64, sent_at: f64) -> Message {
        Message {
            sender,
            v_pu,
            i_pu,
            sent_at,
        }
    }

    #[test]
    fn per_unit_examples() {
        let n = node(0, 2, 10.0, 1.0);
        assert_eq!(n.per_unit(5.0, 400.0), (0.5, 1.0));
        assert_eq!(n.per_unit(0.0, 400.0).0, 0.0);
    }

    #[test]
    fn graph_validation() {
        assert!(CommGraph::from_edges(2, &[(0, 1)]).is_err());
        assert!(CommGraph::from_edges(2, &[(0, 0), (1, 0)]).is_err());
        assert!(CommGraph::from_edges(2, &[(0, 2)]).is_err());
        let g = CommGraph::from_edges(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        assert_eq!(g.in_neighbors(0).collect::<Vec<_>>(), vec![2]);
        assert_eq!(g.out_neighbors(0).collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn consensus_examples() {
        let g = CommGraph::complete(2).unwrap();
        let mut n = node(0, 2, 10.0, 1.0);
        let r = n.consensus_references(&g, &[msg(1, 0.95, 0.3, 0.0)], 0.7, 0.95);
        assert_eq!(r.i_ref_pu, 0.3);
        assert_eq!(r.v_bar_pu, 0.95);

        let g3 = CommGraph::complete(3).unwrap();
        let mut n = node(0, 3, 10.0, 1.0);
        let r = n.consensus_references(
            &g3,
            &[msg(1, 1.0, 0.4, 0.0), msg(2, 0.97, 0.6, 0.0)],
            0.5,
            0.94,
        );
        assert_relative_eq!(r.i_ref_pu, 0.5);
        assert_relative_eq!(r.v_bar_pu, (0.94 + 1.0 + 0.97) / 3.0);
    }

    #[test]
    fn consensus_holds_when_nothing_is_delivered() {
        let g = CommGraph::complete(2).unwrap();
        let mut n = node(0, 2, 10.0, 1.0);
        let r0 = n.consensus_references(&g, &[], 0.4, 0.98);
        assert_eq!(r0, References { i_ref_pu: 0.4, v_bar_pu: 0.98 });
        let r1 = n.consensus_references(&g, &[msg(1, 0.9, 0.2, 0.0)], 0.4, 0.98);
        // neighbour value persists across silent ticks
        let r2 = n.consensus_references(&g, &[], 0.41, 0.98);
        assert_eq!(r1.i_ref_pu, r2.i_ref_pu);
    }

    #[test]
    fn consensus_fixed_point() {
        let g = CommGraph::complete(3).unwrap();
        let mut n = node(1, 3, 5.0, 2.0);
        let r = n.consensus_references(&g, &[msg(0, 1.0, 0.37, 0.0), msg(2, 1.0, 0.37, 0.0)], 0.37, 1.0);
        assert_eq!(r.i_ref_pu, 0.37);
    }

    #[test]
    fn delay_semantics() {
        let g = CommGraph::complete(2).unwrap();
        let mut net = Network::new(g.clone(), 0.01).unwrap();
        let d = net.tick(&[msg(0, 1.0, 0.5, 0.0)], 0.0).unwrap();
        assert!(d[1].is_empty());
        let d = net.tick(&[], 0.005).unwrap();
        assert!(d[1].is_empty());
        let d = net.tick(&[], 0.01).unwrap();
        assert_eq!(d[1].len(), 1);
        assert!(d[0].is_empty());

        let mut net0 = Network::new(g.clone(), 0.0).unwrap();
        let d = net0.tick(&[msg(1, 1.0, 0.5, 0.0)], 0.0).unwrap();
        assert_eq!(d[0].len(), 1);

        let mut net = Network::new(g, 0.01).unwrap();
        net.tick(&[msg(0, 1.0, 0.1, 0.0), msg(0, 1.0, 0.2, 0.0)], 0.0).unwrap();
        let d = net.tick(&[], 0.02).unwrap();
        assert_eq!(d[1].iter().map(|m| m.i_pu).collect::<Vec<_>>(), vec![0.1, 0.2]);
        assert!(net.tick(&[], 0.01).is_err());
    }

    #[test]
    fn disabled_loops_leave_initial_droop() {
        let mut n = node(0, 2, 10.0, 1.0);
        let refs = References { i_ref_pu: 0.3, v_bar_pu: 0.9 };
        let mut ev = Vec::new();
        for _ in 0..10 {
            let out = n.dsc_step(Measurement { i: 4.6, v: 393.0 }, refs, 0.01, &mut ev);
            assert_eq!(out, DroopOutput { droop: 1.0, r_v: 0.0, r_i: 0.0 });
        }
        assert_eq!(n.current_controller().state().theta, [0.0, 0.0]);
    }

    #[test]
    fn droop_is_the_sum_of_its_parts() {
        let mut n = node(0, 2, 10.0, 1.0);
        n.enable(LoopKind::Current);
        n.enable(LoopKind::Voltage);
        let mut ev = Vec::new();
        for k in 0..50 {
            let refs = References {
                i_ref_pu: 0.55,
                v_bar_pu: 0.97 + 1e-4 * k as f64,
            };
            let out = n.dsc_step(Measurement { i: 4.6, v: 390.0 }, refs, 0.01, &mut ev);
            assert_eq!(out.droop, 1.0 + out.r_v + out.r_i);
        }
        assert!(ev.is_empty());
        // below the bus reference and below the current setpoint: droop falls
        assert!(n.last_output().droop < 1.0);
    }

    #[test]
    fn sign_follows_current_with_hysteresis() {
        let mut n = node(0, 2, 10.0, 1.0);
        n.enable(LoopKind::Current);
        let refs = References { i_ref_pu: 0.0, v_bar_pu: 1.0 };
        let mut ev = Vec::new();
        n.dsc_step(Measurement { i: 1.0, v: 400.0 }, refs, 0.01, &mut ev);
        assert_eq!(n.current_controller().sign_b(), -1.0);
        n.dsc_step(Measurement { i: -0.01, v: 400.0 }, refs, 0.01, &mut ev);
        assert_eq!(n.current_controller().sign_b(), -1.0);
        n.dsc_step(Measurement { i: -0.2, v: 400.0 }, refs, 0.01, &mut ev);
        assert_eq!(n.current_controller().sign_b(), 1.0);
    }

    #[test]
    fn controller_fault_freezes_loop() {
        let mut n = node(0, 2, 10.0, 1.0);
        n.enable(LoopKind::Current);
        let mut ev = Vec::new();
        let refs = References { i_ref_pu: 0.5, v_bar_pu: 1.0 };
        n.dsc_step(Measurement { i: 4.0, v: 400.0 }, refs, 0.01, &mut ev);
        let bad = References { i_ref_pu: f64::NAN, v_bar_pu: 1.0 };
        n.dsc_step(Measurement { i: 4.0, v: 400.0 }, bad, 0.01, &mut ev);
        assert_eq!(ev.len(), 1);
        let theta = n.current_controller().state().theta;
        n.dsc_step(Measurement { i: 3.0, v: 400.0 }, refs, 0.01, &mut ev);
        assert_eq!(n.current_controller().state().theta, theta);
    }
}
