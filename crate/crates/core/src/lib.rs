//! Deterministic simulator for just-in-time event detection on
//! energy-harvesting sensor nodes.
//!
//! The crate models a node that harvests energy, stores it (abstract units
//! or an expandable capacitor array) and decides every second whether to
//! wake up and look for events. Policies range from an always-awake oracle
//! and threshold-driven duty cycling to a three-phase learner that profiles
//! the event pattern and learns per-peak wake-up schedules with tabular
//! Q-learning.

pub mod config;
pub mod energy;
pub mod engine;
pub mod error;
pub mod learner;
pub mod policies;
pub mod report;
pub mod rng;
pub mod sweep;
pub mod world;

pub use error::{Error, Result};
