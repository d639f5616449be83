//! Closed-loop multi-vehicle traffic simulation with cooperative platoon
//! lane-change planning.
//!
//! A platoon of connected vehicles in one lane wants to move to an adjacent
//! lane through dense uncontrolled traffic. Two coordination strategies are
//! implemented on top of a shared receding-horizon planner:
//!
//! * **baseline** — the platoon changes lanes only when the maneuver is
//!   simultaneously feasible for every member;
//! * **proposed** — the front vehicle acts as a *facilitator*: it changes
//!   lanes alone as soon as its own maneuver is feasible, then regulates the
//!   free space around itself so the rest of the platoon can follow.
//!
//! The crate contains the road/vehicle models, the car-following model for
//! uncontrolled traffic, the mode state machines, the optimal-control
//! planner (backed by the `sqp` crate), the deterministic simulation engine,
//! scenario generators and dataset ingestion, and batch evaluation tooling.

pub mod batch;
pub mod config;
pub mod dynamics;
pub mod fsm;
pub mod geometry;
pub mod npc;
pub mod planner;
pub mod scenario;
pub mod sim;
pub mod trace;

pub use config::SimConfig;
pub use fsm::Strategy;
pub use scenario::Scenario;
pub use sim::{run, SimOptions, SimResult};
