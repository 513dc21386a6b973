//! Numerical free-final-time solver for position-constrained optimal control.
//!
//! Direct transcription on a normalized time axis: the decision variables are
//! `t_f` and one held control per node, the dynamics are imposed by RK4 steps
//! of length `t_f / N`, and the terminal condition `E x(t_f) = goal` enters as
//! a quadratic penalty whose weight is raised stage by stage. Each stage is
//! minimized by projected gradient descent with Nesterov momentum, adaptive
//! restart and backtracking; gradients come from an exact adjoint sweep
//! through the RK4 steps.
//!
//! The solver backs the training-data generator for the learned steering
//! function and doubles as an oracle for the closed-form linear solution.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    position, wrap_angle, ControlVec, PartialState, StateVec, SystemKind, SystemModel, Trajectory,
};
use crate::error::{contract, Error, Result};
use crate::learning::Dataset;
use crate::steering::SteeringResult;

/// Terminal residual below which a numeric solution is accepted.
pub const FEASIBILITY_TOL: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub penalty_schedule: Vec<f64>,
    pub max_iters_per_stage: usize,
    /// Stop a stage once the projected-gradient step norm drops below this.
    pub step_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            penalty_schedule: vec![1e2, 1e3, 1e4, 1e5],
            max_iters_per_stage: 2000,
            step_tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TranscriptionProblem {
    pub system: SystemModel,
    pub x0: StateVec,
    pub goal: PartialState,
    pub num_nodes: usize,
    pub tf_bounds: (f64, f64),
    pub control_bounds: (ControlVec, ControlVec),
    pub settings: SolverSettings,
}

impl TranscriptionProblem {
    pub fn new(system: &SystemModel, x0: StateVec, goal: PartialState) -> Self {
        Self {
            system: system.clone(),
            x0,
            goal,
            num_nodes: 40,
            tf_bounds: (0.05, 20.0),
            control_bounds: (system.control_lo, system.control_hi),
            settings: SolverSettings::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_nodes < 10 {
            return Err(contract("num_nodes must be at least 10"));
        }
        let (lo, hi) = self.tf_bounds;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(contract("tf bounds must satisfy 0 < lo <= hi"));
        }
        if !self.x0.iter().chain(self.goal.iter()).all(|v| v.is_finite()) {
            return Err(contract("boundary conditions must be finite"));
        }
        if self.settings.penalty_schedule.is_empty() {
            return Err(contract("empty penalty schedule"));
        }
        Ok(())
    }
}

/// Everything learned while solving one problem.
#[derive(Clone, Debug)]
pub struct NumericSolution {
    pub result: SteeringResult,
    /// Terminal residual after each penalty stage of the winning start.
    pub stage_residuals: Vec<f64>,
    pub start_index: usize,
    pub iterations: usize,
}

struct Transcription<'a> {
    sys: &'a SystemModel,
    x0: StateVec,
    goal: PartialState,
    n: usize,
}

impl Transcription<'_> {
    #[inline]
    fn control(z: &[f64], k: usize) -> ControlVec {
        ControlVec::new(z[2 * k], z[2 * k + 1])
    }

    fn rollout(&self, z: &[f64], states: &mut Vec<StateVec>) {
        let h = z[2 * self.n] / self.n as f64;
        states.clear();
        let mut x = self.x0;
        states.push(x);
        for k in 0..self.n {
            x = self.sys.rk4_step(&x, &Self::control(z, k), h);
            states.push(x);
        }
    }

    fn effort(&self, z: &[f64]) -> f64 {
        (0..self.n)
            .map(|k| {
                let u = Self::control(z, k);
                u.dot(&(self.sys.r * u))
            })
            .sum()
    }

    fn residual_vec(&self, states: &[StateVec]) -> Vector2<f64> {
        position(&states[self.n]) - self.goal
    }

    fn value(&self, z: &[f64], w: f64, states: &mut Vec<StateVec>) -> f64 {
        self.rollout(z, states);
        let tf = z[2 * self.n];
        let r = self.residual_vec(states);
        let f = tf + tf / self.n as f64 * self.effort(z) + w * r.norm_squared();
        if f.is_finite() {
            f
        } else {
            f64::INFINITY
        }
    }

    /// Objective and gradient by a reverse sweep through the RK4 steps.
    fn value_and_grad(&self, z: &[f64], w: f64, states: &mut Vec<StateVec>, grad: &mut [f64]) -> f64 {
        let f = self.value(z, w, states);
        let n = self.n;
        let tf = z[2 * n];
        let h = tf / n as f64;
        let r = self.residual_vec(states);
        let mut lam = StateVec::new(2.0 * w * r[0], 2.0 * w * r[1], 0.0, 0.0);
        let mut h_bar = 0.0;
        for k in (0..n).rev() {
            let x = states[k];
            let u = Self::control(z, k);
            let sys = self.sys;
            let k1 = sys.derivative(&x, &u);
            let y2 = x + k1 * (0.5 * h);
            let k2 = sys.derivative(&y2, &u);
            let y3 = x + k2 * (0.5 * h);
            let k3 = sys.derivative(&y3, &u);
            let y4 = x + k3 * h;

            let mut g1 = lam * (h / 6.0);
            let mut g2 = lam * (h / 3.0);
            let mut g3 = lam * (h / 3.0);
            let g4 = lam * (h / 6.0);
            let mut x_bar = lam;
            let mut u_bar = ControlVec::zeros();
            h_bar += lam.dot(&(k1 + (k2 + k3) * 2.0 + sys.derivative(&y4, &u))) / 6.0;

            let (fx, fu) = sys.jacobians(&y4, &u);
            let yb = fx.tr_mul(&g4);
            u_bar += fu.tr_mul(&g4);
            x_bar += yb;
            g3 += yb * h;
            h_bar += k3.dot(&yb);

            let (fx, fu) = sys.jacobians(&y3, &u);
            let yb = fx.tr_mul(&g3);
            u_bar += fu.tr_mul(&g3);
            x_bar += yb;
            g2 += yb * (0.5 * h);
            h_bar += 0.5 * k2.dot(&yb);

            let (fx, fu) = sys.jacobians(&y2, &u);
            let yb = fx.tr_mul(&g2);
            u_bar += fu.tr_mul(&g2);
            x_bar += yb;
            g1 += yb * (0.5 * h);
            h_bar += 0.5 * k1.dot(&yb);

            let (fx, fu) = sys.jacobians(&x, &u);
            x_bar += fx.tr_mul(&g1);
            u_bar += fu.tr_mul(&g1);

            let ru = sys.r * u;
            u_bar += ru * (2.0 * h);
            grad[2 * k] = u_bar[0];
            grad[2 * k + 1] = u_bar[1];
            lam = x_bar;
        }
        grad[2 * n] = 1.0 + (self.effort(z) + h_bar) / n as f64;
        f
    }
}

struct Projector {
    lo: ControlVec,
    hi: ControlVec,
    tf: (f64, f64),
    n: usize,
}

impl Projector {
    fn apply(&self, z: &mut [f64]) {
        for k in 0..self.n {
            z[2 * k] = z[2 * k].clamp(self.lo[0], self.hi[0]);
            z[2 * k + 1] = z[2 * k + 1].clamp(self.lo[1], self.hi[1]);
        }
        let t = &mut z[2 * self.n];
        *t = t.clamp(self.tf.0, self.tf.1);
    }
}

/// Accelerated projected gradient on one penalty stage. Returns iterations used.
fn minimize_stage(
    tr: &Transcription,
    proj: &Projector,
    z: &mut Vec<f64>,
    w: f64,
    settings: &SolverSettings,
    lipschitz: &mut f64,
) -> usize {
    let dim = z.len();
    let mut states = Vec::with_capacity(tr.n + 1);
    let mut grad = vec![0.0; dim];
    let mut y = z.clone();
    let mut z_new = vec![0.0; dim];
    let mut f_z = tr.value(z, w, &mut states);
    let mut momentum = 1.0_f64;
    let mut iters = 0;
    while iters < settings.max_iters_per_stage {
        iters += 1;
        let f_y = tr.value_and_grad(&y, w, &mut states, &mut grad);
        if !f_y.is_finite() {
            // momentum overshot into a non-finite region; restart from z
            y.copy_from_slice(z);
            momentum = 1.0;
            *lipschitz *= 4.0;
            continue;
        }
        let mut f_new;
        let mut step_sq;
        loop {
            for i in 0..dim {
                z_new[i] = y[i] - grad[i] / *lipschitz;
            }
            proj.apply(&mut z_new);
            step_sq = 0.0;
            let mut lin = 0.0;
            for i in 0..dim {
                let d = z_new[i] - y[i];
                step_sq += d * d;
                lin += grad[i] * d;
            }
            f_new = tr.value(&z_new, w, &mut states);
            if f_new <= f_y + lin + 0.5 * *lipschitz * step_sq + 1e-12 * f_y.abs() {
                break;
            }
            *lipschitz *= 2.0;
            if *lipschitz > 1e16 {
                return iters;
            }
        }
        if f_new > f_z {
            // adaptive restart: drop momentum, retry from the last iterate
            y.copy_from_slice(z);
            momentum = 1.0;
            continue;
        }
        let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / next;
        for i in 0..dim {
            let zi = z_new[i];
            y[i] = zi + beta * (zi - z[i]);
            z[i] = zi;
        }
        proj.apply(&mut y);
        momentum = next;
        f_z = f_new;
        *lipschitz *= 0.95;
        if step_sq.sqrt() < settings.step_tol * (1.0 + z[dim - 1]) {
            break;
        }
    }
    iters
}

/// Initial guess for `t_f` from the boundary conditions.
fn tf_guess(system: &SystemModel, x0: &StateVec, goal: &PartialState) -> f64 {
    let dist = (position(x0) - goal).norm();
    let speed = x0[2].hypot(x0[3]);
    match system.kind {
        SystemKind::DoubleIntegrator2D => 1.0 + 1.5 * dist.sqrt() + 0.5 * speed,
        SystemKind::KinematicCar => 1.5 + 0.8 * dist + 0.5 * x0[3].abs(),
    }
}

/// Controls of a simple pursuit law that heads straight at the goal.
fn straight_line_controls(p: &TranscriptionProblem, tf: f64) -> Vec<ControlVec> {
    let sys = &p.system;
    let n = p.num_nodes;
    let h = tf / n as f64;
    let mut x = p.x0;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let remaining = (tf - k as f64 * h).max(h);
        let to_goal = p.goal - position(&x);
        let u = match sys.kind {
            SystemKind::DoubleIntegrator2D => {
                let v = Vector2::new(x[2], x[3]);
                // minimum-effort double-integrator approach with remaining time T
                (to_goal * 6.0 / (remaining * remaining)) - v * (4.0 / remaining)
            }
            SystemKind::KinematicCar => {
                let dist = to_goal.norm();
                let bearing = to_goal[1].atan2(to_goal[0]);
                let mut err = wrap_angle(bearing - x[2]);
                let forward = err.abs() <= PI / 2.0;
                if !forward {
                    err = wrap_angle(err + PI);
                }
                let cruise = (dist / remaining * 1.5).min(2.0);
                let v_des = if forward { cruise } else { -cruise };
                ControlVec::new(2.0 * err, 2.0 * (v_des - x[3]))
            }
        };
        let u = u.zip_zip_map(&p.control_bounds.0, &p.control_bounds.1, |v, lo, hi| v.clamp(lo, hi));
        x = sys.rk4_step(&x, &u, h);
        out.push(u);
    }
    out
}

/// Solves one problem and reports stage diagnostics.
pub fn solve_pff_detailed(p: &TranscriptionProblem) -> Result<NumericSolution> {
    p.validate()?;
    let n = p.num_nodes;
    let tr = Transcription {
        sys: &p.system,
        x0: p.x0,
        goal: p.goal,
        n,
    };
    let proj = Projector {
        lo: p.control_bounds.0,
        hi: p.control_bounds.1,
        tf: p.tf_bounds,
        n,
    };
    let guess = tf_guess(&p.system, &p.x0, &p.goal).clamp(p.tf_bounds.0, p.tf_bounds.1);
    let long_guess = (2.0 * guess).clamp(p.tf_bounds.0, p.tf_bounds.1);
    let starts: [(Vec<ControlVec>, f64); 3] = [
        (straight_line_controls(p, guess), guess),
        (vec![ControlVec::zeros(); n], guess),
        (vec![ControlVec::zeros(); n], long_guess),
    ];

    let mut best: Option<NumericSolution> = None;
    let mut states = Vec::with_capacity(n + 1);
    for (start_index, (controls, tf0)) in starts.into_iter().enumerate() {
        let mut z: Vec<f64> = controls.iter().flat_map(|u| [u[0], u[1]]).collect();
        z.push(tf0);
        proj.apply(&mut z);
        let mut lipschitz = 1.0;
        let mut iterations = 0;
        let mut stage_residuals = Vec::with_capacity(p.settings.penalty_schedule.len());
        for &w in &p.settings.penalty_schedule {
            iterations += minimize_stage(&tr, &proj, &mut z, w, &p.settings, &mut lipschitz);
            tr.rollout(&z, &mut states);
            stage_residuals.push(tr.residual_vec(&states).norm());
        }
        let residual = *stage_residuals.last().unwrap();
        if !(residual <= FEASIBILITY_TOL) {
            continue;
        }
        let tf = z[2 * n];
        let cost = tf + tf / n as f64 * tr.effort(&z);
        if best.as_ref().is_some_and(|b| b.result.cost <= cost) {
            continue;
        }
        let h = tf / n as f64;
        let trajectory = Trajectory {
            times: (0..=n).map(|k| if k == n { tf } else { k as f64 * h }).collect(),
            states: states.iter().map(|x| p.system.normalize(*x)).collect(),
            controls: (0..n).map(|k| Transcription::control(&z, k)).collect(),
            cost,
        };
        let final_state = *trajectory.final_state();
        best = Some(NumericSolution {
            result: SteeringResult {
                trajectory,
                final_state,
                cost,
                tf,
                success: true,
                endpoint_error: residual,
            },
            stage_residuals,
            start_index,
            iterations,
        });
    }
    Ok(best.unwrap_or_else(|| NumericSolution {
        result: SteeringResult::failure(p.x0, (position(&p.x0) - p.goal).norm()),
        stage_residuals: Vec::new(),
        start_index: usize::MAX,
        iterations: 0,
    }))
}

/// Solves the problem; an infeasible outcome is a result with `success = false`.
pub fn solve_pff_numeric(p: &TranscriptionProblem) -> Result<SteeringResult> {
    solve_pff_detailed(p).map(|s| s.result)
}

/// Axis-aligned box of states.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateBox {
    pub lo: StateVec,
    pub hi: StateVec,
}

impl StateBox {
    /// `x, y ∈ [-4, 4]`, `θ ∈ [-π, π]`, `v ∈ [-2, 2]`.
    pub fn car_training() -> Self {
        Self {
            lo: StateVec::new(-4.0, -4.0, -PI, -2.0),
            hi: StateVec::new(4.0, 4.0, PI, 2.0),
        }
    }

    /// Positions within `[-1.5, 1.5]²` of the goal, velocities in `[-2, 2]²`.
    pub fn double_integrator_local() -> Self {
        Self {
            lo: StateVec::new(-1.5, -1.5, -2.0, -2.0),
            hi: StateVec::new(1.5, 1.5, 2.0, 2.0),
        }
    }

    pub fn contains(&self, x: &StateVec) -> bool {
        (0..4).all(|i| x[i] >= self.lo[i] && x[i] <= self.hi[i])
    }

    pub fn sample(&self, rng: &mut impl Rng) -> StateVec {
        StateVec::from_fn(|i, _| {
            if self.hi[i] > self.lo[i] {
                rng.random_range(self.lo[i]..=self.hi[i])
            } else {
                self.lo[i]
            }
        })
    }
}

/// Manifest describing one dataset generation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationManifest {
    pub format_version: u32,
    pub system: SystemKind,
    pub seed: u64,
    pub requested: usize,
    pub solved: usize,
    pub dropped: usize,
    pub success_rate: f64,
    pub rows: usize,
    pub sample_box: StateBox,
    pub num_nodes: usize,
    pub tf_bounds: (f64, f64),
    pub solver: SolverSettings,
}

impl GenerationManifest {
    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

/// Minimum fraction of solved instances below which generation aborts.
pub const MIN_SUCCESS_RATE: f64 = 0.5;

/// Samples `n` initial states in `sample_box`, solves each towards the origin
/// with the non-position states free, and collects `(state, control,
/// cost-to-go)` rows from every node of every solved trajectory.
///
/// Tails of optimal trajectories are themselves optimal, so each node carries
/// the remaining cost of its trajectory; the first row of a trajectory holds
/// its full cost.
pub fn generate_dataset(
    system: &SystemModel,
    n: usize,
    seed: u64,
    sample_box: &StateBox,
) -> Result<(Dataset, GenerationManifest)> {
    generate_dataset_with(system, n, seed, sample_box, 40, &SolverSettings::default())
}

pub fn generate_dataset_with(
    system: &SystemModel,
    n: usize,
    seed: u64,
    sample_box: &StateBox,
    num_nodes: usize,
    settings: &SolverSettings,
) -> Result<(Dataset, GenerationManifest)> {
    if n == 0 {
        return Err(contract("dataset size must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<StateVec> = (0..n).map(|_| sample_box.sample(&mut rng)).collect();
    let template = {
        let mut t = TranscriptionProblem::new(system, StateVec::zeros(), PartialState::zeros());
        t.num_nodes = num_nodes;
        t.settings = settings.clone();
        t
    };
    let solved: Vec<Option<SteeringResult>> = starts
        .par_iter()
        .map(|x0| {
            let mut p = template.clone();
            p.x0 = *x0;
            match solve_pff_numeric(&p) {
                Ok(r) if r.success && position(&r.final_state).norm() <= FEASIBILITY_TOL => Some(r),
                _ => None,
            }
        })
        .collect();

    let mut data = Dataset::default();
    let mut solved_count = 0;
    for r in solved.iter().flatten() {
        solved_count += 1;
        let traj = &r.trajectory;
        let mut tail = traj.cost;
        for (k, u) in traj.controls.iter().enumerate() {
            data.push(system.normalize(traj.states[k]), *u, Some(tail));
            tail -= (traj.times[k + 1] - traj.times[k]) * system.running_cost(u);
        }
    }
    let rate = solved_count as f64 / n as f64;
    let manifest = GenerationManifest {
        format_version: 1,
        system: system.kind,
        seed,
        requested: n,
        solved: solved_count,
        dropped: n - solved_count,
        success_rate: rate,
        rows: data.len(),
        sample_box: *sample_box,
        num_nodes,
        tf_bounds: template.tf_bounds,
        solver: settings.clone(),
    };
    if rate < MIN_SUCCESS_RATE {
        return Err(Error::GenerationAborted {
            rate,
            min_rate: MIN_SUCCESS_RATE,
        });
    }
    Ok((data, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::trajectory_cost;
    use crate::linear_steering::LinearSystem;

    #[test]
    fn adjoint_gradient_matches_finite_differences() {
        for sys in [SystemModel::double_integrator(), SystemModel::kinematic_car()] {
            let tr = Transcription {
                sys: &sys,
                x0: StateVec::new(1.0, -2.0, 0.4, 0.7),
                goal: PartialState::new(0.2, 0.1),
                n: 12,
            };
            let mut z: Vec<f64> = (0..24).map(|i| ((i as f64) * 0.37).sin() * 0.8).collect();
            z.push(3.1);
            let mut states = Vec::new();
            let mut grad = vec![0.0; z.len()];
            tr.value_and_grad(&z, 50.0, &mut states, &mut grad);
            for i in 0..z.len() {
                let eps = 1e-6;
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[i] += eps;
                zm[i] -= eps;
                let fd = (tr.value(&zp, 50.0, &mut states) - tr.value(&zm, 50.0, &mut states)) / (2.0 * eps);
                let scale = fd.abs().max(grad[i].abs()).max(1.0);
                assert!((fd - grad[i]).abs() / scale < 1e-6, "{:?} var {i}: {fd} vs {}", sys.kind, grad[i]);
            }
        }
    }

    #[test]
    fn double_integrator_matches_closed_form() {
        let di = SystemModel::double_integrator();
        let lin = LinearSystem::double_integrator();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let bx = StateBox::double_integrator_local();
        for _ in 0..20 {
            let x0 = bx.sample(&mut rng);
            let sol = solve_pff_detailed(&TranscriptionProblem::new(&di, x0, PartialState::zeros())).unwrap();
            let r = &sol.result;
            assert!(r.success, "{x0:?}");
            let exact = lin.steer_pff(&x0, &PartialState::zeros()).cost;
            assert!((r.cost - exact).abs() / exact <= 0.02, "{} vs {exact} from {x0:?}", r.cost);
            assert!((trajectory_cost(&r.trajectory, &di) - r.cost).abs() <= 0.01 * r.cost);
            for w in sol.stage_residuals.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-12, "{:?}", sol.stage_residuals);
            }
        }
    }

    #[test]
    fn car_reaches_goal_ahead() {
        let car = SystemModel::kinematic_car();
        let r = solve_pff_numeric(&TranscriptionProblem::new(
            &car,
            StateVec::zeros(),
            PartialState::new(1.0, 0.0),
        ))
        .unwrap();
        assert!(r.success);
        assert!(r.endpoint_error <= 1e-3);
        // |v| <= t with unit acceleration, so reaching distance 1 needs t_f >= sqrt(2)
        assert!(r.tf >= 2.0_f64.sqrt() - 1e-3);
        assert!(r.cost >= r.tf);
        assert!((trajectory_cost(&r.trajectory, &car) - r.cost).abs() <= 0.01 * r.cost);
        assert!(r.trajectory.resimulation_error(&car).unwrap() < 1e-9);
    }

    #[test]
    fn car_already_at_goal() {
        let car = SystemModel::kinematic_car();
        let p = TranscriptionProblem::new(&car, StateVec::new(0.0, 0.0, 1.0, 0.0), PartialState::zeros());
        let r = solve_pff_numeric(&p).unwrap();
        assert!(r.success);
        assert!(r.cost <= 2.0 * p.tf_bounds.0);
    }

    #[test]
    fn infeasible_problem_fails() {
        let car = SystemModel::kinematic_car();
        let mut p = TranscriptionProblem::new(&car, StateVec::zeros(), PartialState::new(30.0, 0.0));
        p.tf_bounds = (0.05, 2.0);
        let r = solve_pff_numeric(&p).unwrap();
        assert!(!r.success);
    }

    #[test]
    fn invalid_problem_rejected() {
        let car = SystemModel::kinematic_car();
        let mut p = TranscriptionProblem::new(&car, StateVec::zeros(), PartialState::new(1.0, 0.0));
        p.num_nodes = 5;
        assert!(solve_pff_numeric(&p).is_err());
        let mut p = TranscriptionProblem::new(&car, StateVec::zeros(), PartialState::new(1.0, 0.0));
        p.tf_bounds = (0.0, 1.0);
        assert!(solve_pff_numeric(&p).is_err());
    }

    #[test]
    fn zero_size_dataset_rejected() {
        let car = SystemModel::kinematic_car();
        assert!(generate_dataset(&car, 0, 1, &StateBox::car_training()).is_err());
    }
}
