//! Quasistatic two-dimensional simulator for magnetic-shape-memory
//! particle/polymer composites on a periodic unit cell.
//!
//! The crate models a single circular martensitic particle embedded in a
//! soft elastic matrix.  The particle carries two twin-related variants
//! separated by a movable planar interface; its state couples elastic,
//! magnetic (Zeeman, stray-field, anisotropy) and dissipative effects.
//! External-field histories are resolved by an incremental energy
//! minimization with rate-independent dissipation.

pub mod bem;
pub mod config;
pub mod energy;
pub mod evolution;
pub mod geometry;
pub mod output;

pub use config::{ConfigError, FieldProtocol, ProtocolKind, SimulationConfig};
pub use energy::{EnergyBreakdown, EnergyError, EnergyModel};
pub use evolution::{
    dissipation_distance, run_protocol, EvolutionError, SampleRecord, StopReason, Trace,
};
pub use geometry::{discretize_cell, CellMesh, DofLayout, Side, State};
pub use output::{emit_plot_data, summarize, write_trace, OutputError, SummaryStats};
