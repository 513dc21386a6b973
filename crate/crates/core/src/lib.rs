//! Kinodynamic motion planning with partial-final-state-free steering.

pub mod benchmark;
pub mod dynamics;
pub mod environment;
pub mod error;
pub mod learning;
pub mod linear_steering;
pub mod ocp_solver;
pub mod planner;
pub mod plot;
pub mod steering;

pub use dynamics::{ControlVec, PartialState, StateVec, SystemKind, SystemModel, Trajectory};
pub use error::{Error, Result};
pub use linear_steering::LinearSystem;
pub use steering::{SteeringBackend, SteeringResult};
