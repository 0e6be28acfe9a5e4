//! Deterministic collective-foraging simulator.
//!
//! A swarm of robots leaves a home disc to search a rectangular foraging
//! area for food and carries what it finds back home. Which robots go out
//! is decided by a response-threshold controller: each robot compares a
//! shared task stimulus against its own threshold, and both values adapt
//! after every trip depending on whether the trip paid for itself and on
//! what the robot saw of its peers. Fixed-number and fixed-ratio baselines
//! and a three-level activity variant are included for comparison.
//!
//! Modules, bottom up: [`world`] (geometry, food, ledgers, RNG),
//! [`controller`] (pure decision rules), [`engine`] (phase-ordered stepping),
//! [`metrics`] (net energy, efficiency, aggregates) and [`experiment`]
//! (spec files, sweeps, CSV output).

pub mod controller;
pub mod engine;
pub mod experiment;
pub mod metrics;
pub mod world;

pub use controller::{Controller, ControllerKind, ControllerParams};
pub use engine::{run, step, EngineError, RunOutput, SimState};
pub use metrics::{aggregate, efficiency, net_energy, RunResult};
pub use world::{validate_config, WorldConfig};
