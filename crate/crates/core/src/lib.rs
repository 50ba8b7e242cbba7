//! Agent-based multimodal transportation simulator.
//!
//! The pipeline runs in stages: build a multimodal network (roadway CSVs +
//! GTFS transit), synthesize a population with daily activity schedules,
//! route every trip over time-dependent link costs, simulate one day of
//! mesoscopic traffic and transit with within-day replanning, iterate the
//! day to equilibrium, and compare scenarios (e.g. full transit removal
//! with increased car ownership) into congestion, cancellation, equity and
//! economic-impact reports.

pub mod analytics;
pub mod config;
pub mod demand;
pub mod equilibrium;
pub mod error;
pub mod io;
pub mod network;
pub mod router;
pub mod scenario;
pub mod simcore;
pub mod types;

pub use error::{Error, Result};
