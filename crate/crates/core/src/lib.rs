//! Deterministic discrete-event simulator of a BB84 receiver under detector
//! blinding and faked-state attacks, with a randomized-attenuator
//! countermeasure and its statistical monitor.
//!
//! A run is a pure function of its [`config::Config`] and master seed: every
//! random draw comes from a counter-addressed stream (see [`rng`]).

pub mod attack;
pub mod config;
pub mod detectors;
pub mod engine;
pub mod export;
pub mod harness;
pub mod monitor;
pub mod optics;
pub mod parallel;
pub mod rng;
pub mod station;
pub mod time;

pub use config::{Config, ConfigError};
pub use engine::{run_scenario, Engine, ScenarioReport, SlotRecord};
pub use monitor::AttackVerdict;
pub use time::{SimTime, TimeBase};
