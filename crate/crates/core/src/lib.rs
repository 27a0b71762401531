//! Cell-level discrete-event simulation of TCP over ATM ABR and UBR on
//! long-delay satellite paths, with ERICA and ERICA+ explicit-rate switches.
//!
//! The building blocks ([`engine`], [`link`], [`erica`], [`abr`], [`tcp`],
//! [`vbr`]) are usable on their own; [`scenario`] wires them into the
//! single-bottleneck topology and produces run reports.

// `!(x > 0.0)` is how validation rejects NaN along with the bad values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abr;
pub mod cell;
pub mod engine;
pub mod erica;
pub mod error;
pub mod link;
pub mod scenario;
pub mod tcp;
pub mod time;
pub mod vbr;

pub use abr::{AbrSource, AbrSourceConfig, ServiceClass};
pub use cell::{Cell, CellKind, VcId};
pub use engine::{Event, Scheduler};
pub use erica::{EricaConfig, EricaPlusParams, EricaPort, IntervalSummary, SwitchScheme};
pub use error::{ConfigError, ReportError};
pub use link::{DepthSeries, EnqueueOutcome, Link, PortQueues};
pub use scenario::{run_scenario, RunReport, ScenarioConfig, Simulation, TraceOptions, Verdict};
pub use tcp::{Encapsulation, Segment, TcpConfig, TcpReceiver, TcpSender};
pub use time::SimTime;
pub use vbr::{VbrConfig, VbrSource};
