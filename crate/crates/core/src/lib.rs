//! Deterministic DC microgrid simulator with robust adaptive droop control.
//!
//! The crate is organised bottom-up:
//!
//! * [`plant`]: droop-controlled converters, RL feeders and a bus load.
//! * [`smallsignal`]: first-order droop sensitivity models and their
//!   finite-difference check against the plant.
//! * [`mrac`]: closed-loop reference model adaptive controller with
//!   normalisation, parameter projection and adaptation gain scheduling.
//! * [`secondary`]: per-node distributed secondary control, consensus
//!   references and the delayed message layer.
//! * [`baseline`]: PI secondary control used for comparison.
//! * [`metrics`]: integral-squared-error evaluation over trace windows.
//! * [`scenario`], [`sim`], [`trace`], [`plot`]: scenario files, the coupled
//!   run loop, CSV traces and plot-script generation.

pub mod baseline;
pub mod error;
pub mod metrics;
pub mod mrac;
pub mod plant;
pub mod plot;
pub mod scenario;
pub mod secondary;
pub mod sim;
pub mod smallsignal;
pub mod trace;

pub use error::{Error, Result};
pub use mrac::{CrmConfig, CrmController, CrmDiagnostics, CrmState};
pub use plant::{ConverterParams, LineParams, LoadModel, PlantParams, PlantState};
pub use scenario::{ControllerKind, Scenario};
pub use secondary::{CommGraph, DscNode, Message};
pub use sim::{run, ControllerBounds, RunOutput, Summary};
pub use trace::{Trace, TraceRecord};
