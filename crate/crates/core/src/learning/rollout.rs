use crate::dynamics::{
    position, trajectory_cost, translate, with_position, ControlVec, PartialState, StateVec, SystemModel,
    Trajectory,
};
use crate::error::{contract, Result};
use crate::ocp_solver::StateBox;
use crate::steering::SteeringResult;

use super::mlp::Mlp;
use super::train::{train_regressor, TrainConfig, TrainReport};
use super::Dataset;

/// Rollout settings for learned steering.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutSettings {
    pub dt: f64,
    pub t_max: f64,
    /// Stop as soon as the position is this close to the goal.
    pub capture_radius: f64,
    /// A rollout succeeds when it ends this close to the goal.
    pub accept_radius: f64,
    /// Optimal trajectories from the edge of the domain leave it (braking
    /// from top speed takes up to 2 m), so rollouts are only cut once they
    /// exceed it by these margins.
    pub position_margin: f64,
    pub speed_margin: f64,
}

impl Default for RolloutSettings {
    fn default() -> Self {
        Self {
            dt: 0.05,
            t_max: 15.0,
            capture_radius: 0.05,
            accept_radius: 0.3,
            position_margin: 2.0,
            speed_margin: 0.5,
        }
    }
}

/// Partial-final-state steering by rolling out a learned feedback controller,
/// with a second network estimating the cost-to-go.
#[derive(Clone, Debug)]
pub struct LearnedSteering {
    pub system: SystemModel,
    pub controller: Mlp,
    pub cost_model: Mlp,
    /// Goal-relative states the networks were trained on. Queries starting
    /// outside it are refused, and rollouts straying too far from it are cut
    /// short.
    pub domain: StateBox,
    pub settings: RolloutSettings,
}

impl LearnedSteering {
    pub fn new(system: SystemModel, controller: Mlp, cost_model: Mlp, domain: StateBox) -> Result<Self> {
        if controller.output_dim() != 2 || cost_model.output_dim() != 1 {
            return Err(contract("controller must output 2 values and the cost model 1"));
        }
        Ok(Self {
            system,
            controller,
            cost_model,
            domain,
            settings: RolloutSettings::default(),
        })
    }

    fn local(&self, x: &StateVec, goal: &PartialState) -> StateVec {
        with_position(x, &(position(x) - goal))
    }

    /// Position and speed checks only: the heading is always in range.
    fn in_domain(&self, local: &StateVec) -> bool {
        self.within(local, 0.0, 0.0)
    }

    fn within(&self, local: &StateVec, pos_margin: f64, speed_margin: f64) -> bool {
        [(0usize, pos_margin), (1, pos_margin), (3, speed_margin)]
            .iter()
            .all(|&(i, m)| local[i] >= self.domain.lo[i] - m && local[i] <= self.domain.hi[i] + m)
    }

    /// Largest goal distance at which queries are always inside the domain.
    pub fn max_query_radius(&self) -> f64 {
        [0usize, 1]
            .iter()
            .map(|&i| self.domain.hi[i].min(-self.domain.lo[i]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn predict_control(&self, local: &StateVec) -> ControlVec {
        let u = self.controller.predict(local);
        self.system.clamp_control(&ControlVec::new(u[0], u[1]))
    }

    /// Estimated cost-to-go from `x` to the goal position, `None` outside
    /// the trained domain.
    pub fn predict_cost(&self, x: &StateVec, goal: &PartialState) -> Option<f64> {
        let local = self.local(x, goal);
        if !self.in_domain(&local) {
            return None;
        }
        if position(&local).norm() <= self.settings.capture_radius {
            return Some(0.0);
        }
        Some(self.cost_model.predict(&local)[0].max(0.0))
    }

    /// Rolls the controller out from `x_a` towards the goal position. The
    /// result reports the state actually reached; `success` means it ended
    /// within the acceptance radius.
    pub fn steer(&self, x_a: &StateVec, goal: &PartialState) -> SteeringResult {
        let s = &self.settings;
        let mut x = self.system.normalize(self.local(x_a, goal));
        let err0 = position(&x).norm();
        if !self.in_domain(&x) || !x.iter().all(|v| v.is_finite()) {
            return SteeringResult::failure(*x_a, err0);
        }
        let mut traj = Trajectory::stationary(x);
        let mut dist = err0;
        let mut t = 0.0;
        while dist > s.capture_radius && t < s.t_max - 1e-12 {
            let h = s.dt.min(s.t_max - t);
            let u = self.predict_control(&x);
            let next = self.system.normalize(self.system.rk4_step(&x, &u, h));
            if !next.iter().all(|v| v.is_finite()) {
                return SteeringResult::failure(*x_a, err0);
            }
            let next_dist = position(&next).norm();
            // closest approach already passed inside the acceptance disc
            if next_dist > dist && dist <= s.accept_radius {
                break;
            }
            t += h;
            traj.times.push(t);
            traj.states.push(next);
            traj.controls.push(u);
            x = next;
            dist = next_dist;
            if !self.within(&x, s.position_margin, s.speed_margin) {
                break;
            }
        }
        let mut traj = translate(&traj, goal);
        traj.cost = trajectory_cost(&traj, &self.system);
        let final_state = *traj.final_state();
        SteeringResult {
            cost: traj.cost,
            tf: traj.duration(),
            final_state,
            success: dist <= s.accept_radius,
            endpoint_error: dist,
            trajectory: traj,
        }
    }
}

/// Summary of a batch of rollouts.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutStats {
    pub attempts: usize,
    pub successes: usize,
    pub mean_endpoint_error: f64,
}

impl RolloutStats {
    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.attempts.max(1) as f64
    }
}

/// Rolls out from each of `starts` towards the origin.
pub fn evaluate_rollouts(steer: &LearnedSteering, starts: &[StateVec]) -> RolloutStats {
    let results: Vec<SteeringResult> = starts.iter().map(|x| steer.steer(x, &PartialState::zeros())).collect();
    let successes = results.iter().filter(|r| r.success).count();
    let mean = results.iter().map(|r| r.endpoint_error).sum::<f64>() / results.len().max(1) as f64;
    RolloutStats {
        attempts: starts.len(),
        successes,
        mean_endpoint_error: mean,
    }
}

/// Both networks of a learned steering backend with their training curves.
#[derive(Clone, Debug)]
pub struct TrainedModels {
    pub controller: Mlp,
    pub cost_model: Mlp,
    pub controller_report: TrainReport,
    pub cost_report: TrainReport,
}

/// Trains the controller on every row and the cost model on rows with a
/// cost-to-go label. The cost model uses `cfg.seed + 1`.
pub fn train_models(data: &Dataset, encoding: super::InputEncoding, cfg: &TrainConfig) -> Result<TrainedModels> {
    let controls: Vec<Vec<f64>> = data.control_targets.iter().map(|u| vec![u[0], u[1]]).collect();
    let (controller, controller_report) = train_regressor(&data.inputs, &controls, encoding, cfg)?;
    let (cx, cy): (Vec<StateVec>, Vec<Vec<f64>>) = data.cost_rows().map(|(x, c)| (*x, vec![c])).unzip();
    let cost_cfg = TrainConfig {
        seed: cfg.seed.wrapping_add(1),
        ..cfg.clone()
    };
    let (cost_model, cost_report) = train_regressor(&cx, &cy, encoding, &cost_cfg)?;
    Ok(TrainedModels {
        controller,
        cost_model,
        controller_report,
        cost_report,
    })
}
