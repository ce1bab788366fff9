//! Coverage-driven scenario generation and verification for a three-lane
//! highway case study.
//!
//! The pipeline has four stages:
//!
//! 1. [`search`] finds abstract witness traces for two-phase grid scenarios
//!    over the discrete-time symbolic model in [`model`].
//! 2. [`concretize`] turns a witness into per-vehicle behavior programs, one
//!    concrete scenario per initial-offset variant.
//! 3. [`sim`] executes a concrete scenario against an ego agent.
//! 4. [`monitor`] maps the simulated trace back onto the grid and classifies
//!    the run; [`campaign`] aggregates coverage over a scenario catalog.

pub mod campaign;
pub mod catalog;
pub mod concretize;
pub mod model;
pub mod monitor;
pub mod rational;
pub mod search;
pub mod sim;

pub use catalog::{GridConfig, ScenarioCatalog, ScenarioSpec};
pub use model::grid::{CellSet, GridBounds, GridCell};
pub use model::{ControlInput, ModelParams, VehicleState, WorldState};
pub use rational::Q;

/// Version string recorded in campaign reports.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
