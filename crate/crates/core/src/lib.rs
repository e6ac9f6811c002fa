//! Density-matrix simulation of quantum networks: shared ensembles of
//! multi-qubit states, agents running concurrently on their own threads, and
//! timed lossy channels between them.

// `!(x >= 0.0)` style checks are used on purpose to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod channels;
pub mod cli;
pub mod error;
pub mod gates;
pub mod linalg;
pub mod protocols;
pub mod qstate;
pub mod qstream;
pub mod simulation;
pub mod time;

pub use agents::{AgentRuntime, OutputSink, Payload};
pub use error::{Error, Result};
pub use linalg::Precision;
pub use qstate::{DensityState, MeasurementOutcome};
pub use qstream::{EnsembleStore, QubitRef, StreamOptions};
pub use simulation::{RunOutcome, SimulationPlan};
pub use time::SimTime;
