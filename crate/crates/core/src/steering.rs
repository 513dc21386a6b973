use serde::{Deserialize, Serialize};

use crate::dynamics::{PartialState, StateVec, SystemModel, Trajectory};
use crate::error::{contract, Error, Result};
use crate::learning::LearnedSteering;
use crate::linear_steering::{LinearSystem, LINEAR_STEER_TOL};

/// Outcome of one steering query. Inexact steering is an ordinary outcome:
/// `success` says whether the requested boundary condition was reached within
/// the backend's tolerance, and `final_state` is always the state actually
/// reached.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteeringResult {
    pub trajectory: Trajectory,
    pub final_state: StateVec,
    pub cost: f64,
    pub tf: f64,
    pub success: bool,
    pub endpoint_error: f64,
}

impl SteeringResult {
    pub fn failure(from: StateVec, endpoint_error: f64) -> Self {
        Self {
            trajectory: Trajectory::stationary(from),
            final_state: from,
            cost: f64::INFINITY,
            tf: 0.0,
            success: false,
            endpoint_error,
        }
    }
}

/// A steering function usable by the planners.
#[derive(Clone, Debug)]
pub enum SteeringBackend {
    /// Closed-form optimal steering of a linear system.
    Linear(LinearSystem),
    /// Rollouts of a learned controller; PFF steering only.
    Learned(LearnedSteering),
}

impl SteeringBackend {
    /// Wraps a linear system, which must carry its nonlinear-model twin for
    /// simulation and costs.
    pub fn linear(lin: LinearSystem) -> Result<Self> {
        if lin.model().is_none() {
            return Err(contract("linear backend needs a system model"));
        }
        Ok(SteeringBackend::Linear(lin))
    }

    pub fn name(&self) -> &'static str {
        match self {
            SteeringBackend::Linear(_) => "linear",
            SteeringBackend::Learned(_) => "learned",
        }
    }

    pub fn system(&self) -> &SystemModel {
        match self {
            SteeringBackend::Linear(l) => l.model().expect("checked at construction"),
            SteeringBackend::Learned(l) => &l.system,
        }
    }

    /// Whether the backend can steer to a prescribed full state.
    pub fn is_exact(&self) -> bool {
        matches!(self, SteeringBackend::Linear(_))
    }

    /// Largest neighbor radius the backend can serve; the learned backend is
    /// limited to its training domain minus the acceptance radius.
    pub fn max_radius(&self) -> f64 {
        match self {
            SteeringBackend::Linear(_) => f64::INFINITY,
            SteeringBackend::Learned(l) => l.max_query_radius() - l.settings.accept_radius,
        }
    }

    /// Tolerance within which a successful PFF steer reaches its target.
    pub fn tolerance(&self) -> f64 {
        match self {
            SteeringBackend::Linear(_) => LINEAR_STEER_TOL,
            SteeringBackend::Learned(l) => l.settings.accept_radius,
        }
    }

    pub fn segcost_pff(&self, x: &StateVec, goal: &PartialState) -> Option<f64> {
        match self {
            SteeringBackend::Linear(l) => l.segcost_linear(x, goal),
            SteeringBackend::Learned(l) => l.predict_cost(x, goal),
        }
    }

    pub fn steer_pff(&self, x: &StateVec, goal: &PartialState) -> SteeringResult {
        match self {
            SteeringBackend::Linear(l) => l.steer_pff(x, goal),
            SteeringBackend::Learned(l) => l.steer(x, goal),
        }
    }

    pub fn segcost_full(&self, a: &StateVec, b: &StateVec) -> Result<Option<f64>> {
        match self {
            SteeringBackend::Linear(l) => Ok(l.segcost_full(a, b)),
            SteeringBackend::Learned(_) => Err(unsupported_full()),
        }
    }

    pub fn steer_full(&self, a: &StateVec, b: &StateVec) -> Result<SteeringResult> {
        match self {
            SteeringBackend::Linear(l) => Ok(l.steer_full(a, b)),
            SteeringBackend::Learned(_) => Err(unsupported_full()),
        }
    }
}

fn unsupported_full() -> Error {
    Error::Unsupported("the learned backend cannot steer to a prescribed full state".into())
}
