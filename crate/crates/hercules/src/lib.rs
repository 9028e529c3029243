//! Requirement-aware congestion control at desk scale.
//!
//! This crate bundles four pieces that are useful together:
//!
//! - a utility function that rewards sending rate and penalizes loss,
//!   RTT growth, and RTT jitter, scaled by how far a connection sits
//!   inside its `(min, max)` bandwidth-requirement band
//!   ([`utility`]);
//! - an online-learning rate controller (slow start / probing /
//!   moving) driven by that utility, plus fair-share and AIMD baseline
//!   controllers ([`ratecontrol`], [`baselines`]);
//! - exact fairness oracles: lexicographic max-min over normalized
//!   rates, classic max-min, and a brute-force grid verifier
//!   ([`fairness`]);
//! - a deterministic fluid-flow simulator of a single bottleneck link
//!   that drives the controllers and produces per-tick time series and
//!   summary metrics ([`sim`]), with declarative scenario files and an
//!   experiment harness on top ([`scenario`], [`harness`]).
//!
//! Everything is deterministic under a fixed seed; trials differ only
//! by seed offsets.

pub mod baselines;
pub mod core;
pub mod fairness;
pub mod harness;
pub mod ratecontrol;
pub mod scenario;
pub mod sim;
pub mod units;
pub mod utility;

pub use crate::core::{CoefficientSet, IntervalStats, Requirement};
pub use crate::fairness::{hrf_allocate, mmf_allocate, AllocationProblem};
pub use crate::scenario::ScenarioConfig;
pub use crate::sim::{SimResult, Simulation};
