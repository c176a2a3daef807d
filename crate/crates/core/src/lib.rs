//! Slot-based system-level simulator for NR-sidelink resource allocation
//! among a group of AGVs cooperatively carrying a workpiece, with A2I uplink
//! traffic sharing the same 20 MHz pool.
//!
//! The crate is organised by subsystem:
//!
//! - [`scenario`]: configuration, factory geometry, formation and mobility.
//! - [`channel`]: path loss, correlated shadowing, noise and SINR.
//! - [`resources`]: the slot x subchannel grid, SL-RSRP sensing history and
//!   the mode-2 candidate exclusion.
//! - [`allocation`]: random, mode-1, mode-2 (with and without re-evaluation)
//!   and leader-based cooperative allocation.
//! - [`link`]: traffic, transmission, reception, duplex and HARQ.
//! - [`engine`]: the per-slot simulation cycle.
//! - [`kpi`]: PRR/throughput, CSV export and sweeps.
//! - [`cli`]: the command line front end.

pub mod allocation;
pub mod channel;
pub mod cli;
pub mod engine;
pub mod error;
pub mod kpi;
pub mod link;
pub mod resources;
pub mod rng;
pub mod scenario;

pub use engine::{run, RunReport, Simulation};
pub use error::{Error, Result};
pub use kpi::KpiRecord;
pub use scenario::ScenarioConfig;
