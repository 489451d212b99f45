//! Particle-based vehicle traffic game on graph circuits.
//!
//! Vehicles move one edge per time step towards their destinations and solve
//! route conflicts with a distributed alternation auction. The crate provides
//! an exact branching engine for that protocol, a fuel model with fuel-coupled
//! priorities, trajectory-tree metrics and the game-theoretic analysis layer.

pub mod analysis;
pub mod auction;
pub mod circuit;
mod error;
pub mod explorer;
pub mod fuel;
pub mod game;
pub mod montecarlo;

pub use circuit::{Circuit, Resource, Vertex};
pub use error::{Error, Result};
pub use explorer::{EquivalenceClass, InitialConfiguration, PriorityRule, TrajectoryTree};
pub use fuel::{BreguetInputs, FuelMode, FuelParameters};
pub use game::{Conflict, GameState, ProtocolOptions, TieBreak, VehicleId, VehicleState};
pub use analysis::{CostReport, PayoffTable, ResolutionMode, ScenarioConfig};

/// Version of the core crate.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
