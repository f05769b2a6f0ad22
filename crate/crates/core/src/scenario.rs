//! Scenario files.
//!
//! A scenario is a TOML document describing the plant, the communication
//! graph, the secondary controller and a time-ordered list of events.
//! Everything except `duration`, `[plant]` and its converters has a default.
//!
//! ```toml
//! name = "activation"
//! duration = 14.0
//! controller = "adaptive"          # or "pi"
//!
//! [plant]
//! load = { type = "resistive", ohms = 53.333333333333336 }
//!
//! [[plant.converters]]
//! rated_power = 4000.0
//! r_d0 = 1.0
//!
//! [[plant.converters]]
//! rated_power = 2000.0
//! r_d0 = 2.0
//!
//! [[events]]
//! t = 2.0
//! action = "enable_current_loop"    # node = "all" by default
//! ```
//!
//! Node indices in files are 1-based.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baseline::PiConfig;
use crate::error::{Error, Result};
use crate::metrics::{IseWindow, SharingReference};
use crate::mrac::CrmConfig;
use crate::plant::{self, ConverterParams, LineParams, LoadModel, PlantParams};
use crate::secondary::CommGraph;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    #[default]
    Adaptive,
    Pi,
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(ControllerKind::Adaptive),
            "pi" => Ok(ControllerKind::Pi),
            other => Err(Error::Config(format!(
                "unknown controller {other:?} (expected adaptive or pi)"
            ))),
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ControllerKind::Adaptive => "adaptive",
            ControllerKind::Pi => "pi",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Timing {
    pub plant_dt: f64,
    pub control_period: f64,
    pub record_interval: f64,
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            plant_dt: plant::DEFAULT_DT,
            control_period: 0.01,
            record_interval: 1e-3,
        }
    }
}

fn default_v_nominal() -> f64 {
    plant::V_NOMINAL
}

fn default_tau_v() -> f64 {
    5e-3
}

fn default_line() -> LineParams {
    LineParams { r: 0.5, l: 3e-3 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConverterSpec {
    /// Rated power (W); the per-unit current base is `rated_power / v_nominal`.
    pub rated_power: f64,
    pub r_d0: f64,
    /// Defaults to the plant's nominal voltage.
    #[serde(default)]
    pub v_ref: Option<f64>,
    #[serde(default = "default_tau_v")]
    pub tau_v: f64,
    #[serde(default = "default_line")]
    pub line: LineParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    #[serde(default = "default_v_nominal")]
    pub v_nominal: f64,
    pub load: LoadModel,
    pub converters: Vec<ConverterSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    /// One-way link delay (s).
    pub delay: f64,
    /// Directed `[from, to]` edges, 1-based. Empty means all-to-all.
    pub edges: Vec<[usize; 2]>,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            delay: 0.01,
            edges: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptiveSpec {
    pub voltage: CrmConfig,
    pub current: CrmConfig,
}

/// Which nodes an event applies to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "NodeSelRaw", into = "NodeSelRaw")]
pub enum NodeSel {
    #[default]
    All,
    /// Zero-based node index.
    Node(usize),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum NodeSelRaw {
    Index(usize),
    Name(String),
}

impl TryFrom<NodeSelRaw> for NodeSel {
    type Error = String;

    fn try_from(raw: NodeSelRaw) -> std::result::Result<Self, String> {
        match raw {
            NodeSelRaw::Name(s) if s == "all" => Ok(NodeSel::All),
            NodeSelRaw::Name(s) => Err(format!("node must be \"all\" or an index, got {s:?}")),
            NodeSelRaw::Index(0) => Err("node indices are 1-based".into()),
            NodeSelRaw::Index(k) => Ok(NodeSel::Node(k - 1)),
        }
    }
}

impl From<NodeSel> for NodeSelRaw {
    fn from(sel: NodeSel) -> Self {
        match sel {
            NodeSel::All => NodeSelRaw::Name("all".into()),
            NodeSel::Node(k) => NodeSelRaw::Index(k + 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum EventAction {
    EnableCurrentLoop {
        #[serde(default)]
        node: NodeSel,
    },
    EnableVoltageLoop {
        #[serde(default)]
        node: NodeSel,
    },
    SetLoad {
        load: LoadModel,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    #[serde(flatten)]
    pub action: EventAction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSpec {
    /// Explicit `[start, end]` ISE windows.
    pub windows: Vec<[f64; 2]>,
    /// Tiled windows: length (s), first start and count. Used when
    /// `windows` is empty and `window_count > 0`.
    pub window_length: f64,
    pub window_start: f64,
    pub window_count: usize,
    pub v_ref: f64,
    /// Settling band as a fraction of the step size.
    pub settle_band: f64,
    /// Averaging window for steady-state values (s).
    pub steady_window: f64,
}

impl Default for MetricsSpec {
    fn default() -> Self {
        Self {
            windows: Vec::new(),
            window_length: 4.0,
            window_start: 0.0,
            window_count: 0,
            v_ref: plant::V_NOMINAL,
            settle_band: 0.02,
            steady_window: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: PathBuf::from(".") }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub duration: f64,
    #[serde(default)]
    pub controller: ControllerKind,
    /// Reserved; the simulation is noise-free.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub timing: Timing,
    pub plant: PlantSpec,
    #[serde(default)]
    pub network: NetworkSpec,
    #[serde(default)]
    pub adaptive: AdaptiveSpec,
    #[serde(default)]
    pub pi: PiConfig,
    #[serde(default)]
    pub events: Vec<Event>,
    #[serde(default)]
    pub metrics: MetricsSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_name() -> String {
    "scenario".into()
}

impl Scenario {
    /// Parses and validates a scenario. Syntax errors carry line and column.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn n_converters(&self) -> usize {
        self.plant.converters.len()
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Error::Config(msg);
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(cfg(format!("duration must be positive, got {}", self.duration)));
        }
        let t = &self.timing;
        if !(t.plant_dt > 0.0 && t.plant_dt <= plant::DT_MAX) {
            return Err(cfg(format!("timing.plant_dt must be in (0, {}]", plant::DT_MAX)));
        }
        ticks(t.control_period, t.plant_dt, "timing.control_period")?;
        ticks(t.record_interval, t.plant_dt, "timing.record_interval")?;

        self.plant_params()
            .map_err(|e| cfg(format!("plant: {e}")))?;
        self.graph()?;
        if !(self.network.delay >= 0.0 && self.network.delay.is_finite()) {
            return Err(cfg("network.delay must be >= 0".into()));
        }
        self.adaptive
            .voltage
            .validate()
            .map_err(|e| cfg(format!("adaptive.voltage: {e}")))?;
        self.adaptive
            .current
            .validate()
            .map_err(|e| cfg(format!("adaptive.current: {e}")))?;
        self.pi.validate().map_err(|e| cfg(format!("pi: {e}")))?;

        let mut last = f64::NEG_INFINITY;
        for (k, ev) in self.events.iter().enumerate() {
            if !(ev.t >= 0.0 && ev.t.is_finite()) {
                return Err(cfg(format!("events[{k}]: time must be >= 0")));
            }
            if ev.t < last {
                return Err(cfg(format!("events[{k}]: events must be sorted by time")));
            }
            last = ev.t;
            match &ev.action {
                EventAction::EnableCurrentLoop { node } | EventAction::EnableVoltageLoop { node } => {
                    if let NodeSel::Node(i) = node {
                        if *i >= self.n_converters() {
                            return Err(cfg(format!("events[{k}]: node {} does not exist", i + 1)));
                        }
                    }
                }
                EventAction::SetLoad { load } => {
                    load.validate().map_err(|e| cfg(format!("events[{k}]: {e}")))?;
                }
            }
        }
        self.ise_windows()?;
        let m = &self.metrics;
        if !(m.settle_band > 0.0 && m.settle_band < 1.0) {
            return Err(cfg("metrics.settle_band must be in (0, 1)".into()));
        }
        if !(m.steady_window > 0.0) {
            return Err(cfg("metrics.steady_window must be positive".into()));
        }
        Ok(())
    }

    pub fn plant_params(&self) -> Result<PlantParams> {
        let v_nom = self.plant.v_nominal;
        let converters = self
            .plant
            .converters
            .iter()
            .map(|c| ConverterParams::from_rating(c.v_ref.unwrap_or(v_nom), c.tau_v, c.rated_power, v_nom, c.r_d0))
            .collect::<Result<Vec<_>>>()?;
        let lines = self.plant.converters.iter().map(|c| c.line).collect();
        PlantParams::new(converters, lines, self.plant.load)
    }

    pub fn graph(&self) -> Result<CommGraph> {
        let n = self.n_converters();
        if self.network.edges.is_empty() {
            return CommGraph::complete(n);
        }
        let mut edges = Vec::with_capacity(self.network.edges.len());
        for [from, to] in &self.network.edges {
            if *from == 0 || *to == 0 {
                return Err(Error::Config("network.edges are 1-based".into()));
            }
            edges.push((from - 1, to - 1));
        }
        CommGraph::from_edges(n, &edges)
    }

    /// Current-sharing shares from the converter ratings.
    pub fn sharing(&self) -> SharingReference {
        let ratings: Vec<f64> = self.plant.converters.iter().map(|c| c.rated_power).collect();
        SharingReference::from_ratings(&ratings)
    }

    pub fn ise_windows(&self) -> Result<Vec<IseWindow>> {
        let m = &self.metrics;
        let windows = if !m.windows.is_empty() {
            m.windows
                .iter()
                .map(|[a, b]| IseWindow::new(*a, *b, m.v_ref, self.sharing()))
                .collect::<Result<Vec<_>>>()
        } else if m.window_count > 0 {
            IseWindow::tiled(m.window_start, m.window_length, m.window_count, m.v_ref, self.sharing())
        } else {
            Ok(Vec::new())
        }
        .map_err(|e| Error::Config(format!("metrics: {e}")))?;
        if let Some(w) = windows.iter().find(|w| w.t_start < 0.0 || w.t_end > self.duration + 1e-9) {
            return Err(Error::Config(format!(
                "metrics: window [{}, {}] outside [0, {}]",
                w.t_start, w.t_end, self.duration
            )));
        }
        Ok(windows)
    }

    pub fn trace_path(&self) -> PathBuf {
        self.output.dir.join(format!("{}.csv", self.name))
    }

    pub fn summary_path(&self) -> PathBuf {
        self.output.dir.join(format!("{}.summary.json", self.name))
    }
}

/// Number of plant steps in `period`, which must be a whole multiple of `dt`.
pub(crate) fn ticks(period: f64, dt: f64, what: &str) -> Result<usize> {
    let n = (period / dt).round();
    if !(n >= 1.0) || ((n * dt - period).abs() > 1e-9 * period.max(1.0)) {
        return Err(Error::Config(format!(
            "{what} = {period} must be a positive multiple of plant_dt = {dt}"
        )));
    }
    Ok(n as usize)
}
