//! System models, fixed-step integration and trajectory bookkeeping.
//!
//! Both shipped systems have four states and two controls, and both use the
//! planar position as the constrained ("partial") part of the state:
//!
//! * 2D double integrator, `x = [p1 p2 v1 v2]`, `ẋ = A x + B u`.
//! * kinematic car, `x = [x y θ v]`, `ẋ = [v cosθ, v sinθ, u1, u2]`.
//!
//! The running cost is `c(x, u) = 1 + uᵀ R u` for every system.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::{Matrix2, Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

pub const STATE_DIM: usize = 4;
pub const CONTROL_DIM: usize = 2;
pub const PARTIAL_DIM: usize = 2;

/// Full system state.
pub type StateVec = Vector4<f64>;
/// Control input.
pub type ControlVec = Vector2<f64>;
/// Position-space projection of a state.
pub type PartialState = Vector2<f64>;

/// Simulation step used when materializing trajectories.
pub const SIM_DT: f64 = 0.01;

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SystemKind {
    #[serde(rename = "double_integrator")]
    DoubleIntegrator2D,
    #[serde(rename = "car")]
    KinematicCar,
}

impl SystemKind {
    pub fn name(self) -> &'static str {
        match self {
            SystemKind::DoubleIntegrator2D => "double_integrator",
            SystemKind::KinematicCar => "car",
        }
    }
}

impl std::str::FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SystemKind::DoubleIntegrator2D, SystemKind::KinematicCar]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown system {s:?}")))
    }
}

/// A dynamical system together with its control box and control weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    pub kind: SystemKind,
    pub control_lo: ControlVec,
    pub control_hi: ControlVec,
    pub r: Matrix2<f64>,
}

impl SystemModel {
    pub fn new(
        kind: SystemKind,
        control_lo: ControlVec,
        control_hi: ControlVec,
        r: Matrix2<f64>,
    ) -> Result<Self> {
        if control_lo.iter().zip(control_hi.iter()).any(|(l, h)| !(l <= h)) {
            return Err(contract("control bounds must satisfy lo <= hi"));
        }
        if (r - r.transpose()).abs().max() > 1e-12 || r.cholesky().is_none() {
            return Err(contract("R must be symmetric positive definite"));
        }
        Ok(Self {
            kind,
            control_lo,
            control_hi,
            r,
        })
    }

    /// The double integrator with `R = I`. The control box is wide enough to
    /// never bind for the analytical steering solutions.
    pub fn double_integrator() -> Self {
        Self {
            kind: SystemKind::DoubleIntegrator2D,
            control_lo: ControlVec::repeat(-10.0),
            control_hi: ControlVec::repeat(10.0),
            r: Matrix2::identity(),
        }
    }

    /// Kinematic car with `u1` (turn rate) and `u2` (acceleration) in `[-1, 1]`.
    pub fn kinematic_car() -> Self {
        Self {
            kind: SystemKind::KinematicCar,
            control_lo: ControlVec::repeat(-1.0),
            control_hi: ControlVec::repeat(1.0),
            r: Matrix2::identity(),
        }
    }

    pub fn for_kind(kind: SystemKind) -> Self {
        match kind {
            SystemKind::DoubleIntegrator2D => Self::double_integrator(),
            SystemKind::KinematicCar => Self::kinematic_car(),
        }
    }

    /// `f(x, u)`.
    #[inline]
    pub fn derivative(&self, x: &StateVec, u: &ControlVec) -> StateVec {
        match self.kind {
            SystemKind::DoubleIntegrator2D => StateVec::new(x[2], x[3], u[0], u[1]),
            SystemKind::KinematicCar => {
                let (s, c) = x[2].sin_cos();
                StateVec::new(x[3] * c, x[3] * s, u[0], u[1])
            }
        }
    }

    /// Slice-checked variant of [`Self::derivative`] for untyped callers.
    pub fn derivative_checked(&self, x: &[f64], u: &[f64]) -> Result<StateVec> {
        let x = state_from_slice(x)?;
        if u.len() != CONTROL_DIM {
            return Err(Error::DimensionMismatch {
                expected: CONTROL_DIM,
                got: u.len(),
            });
        }
        Ok(self.derivative(&x, &ControlVec::new(u[0], u[1])))
    }

    /// Jacobians `(∂f/∂x, ∂f/∂u)` at `(x, u)`.
    #[inline]
    pub fn jacobians(&self, x: &StateVec, _u: &ControlVec) -> (Matrix4<f64>, Matrix4x2<f64>) {
        let mut fu = Matrix4x2::zeros();
        fu[(2, 0)] = 1.0;
        fu[(3, 1)] = 1.0;
        let mut fx = Matrix4::zeros();
        match self.kind {
            SystemKind::DoubleIntegrator2D => {
                fx[(0, 2)] = 1.0;
                fx[(1, 3)] = 1.0;
            }
            SystemKind::KinematicCar => {
                let (s, c) = x[2].sin_cos();
                fx[(0, 2)] = -x[3] * s;
                fx[(0, 3)] = c;
                fx[(1, 2)] = x[3] * c;
                fx[(1, 3)] = s;
            }
        }
        (fx, fu)
    }

    /// `c(x, u) = 1 + uᵀ R u`.
    #[inline]
    pub fn running_cost(&self, u: &ControlVec) -> f64 {
        1.0 + u.dot(&(self.r * u))
    }

    pub fn clamp_control(&self, u: &ControlVec) -> ControlVec {
        u.zip_zip_map(&self.control_lo, &self.control_hi, |v, lo, hi| v.clamp(lo, hi))
    }

    /// Canonical representation of a state (heading wrapped for the car).
    #[inline]
    pub fn normalize(&self, mut x: StateVec) -> StateVec {
        if self.kind == SystemKind::KinematicCar {
            x[2] = wrap_angle(x[2]);
        }
        x
    }

    /// Distance between two states, measuring heading differences on the circle.
    pub fn state_distance(&self, a: &StateVec, b: &StateVec) -> f64 {
        let mut d = a - b;
        if self.kind == SystemKind::KinematicCar {
            d[2] = wrap_angle(d[2]);
        }
        d.norm()
    }

    /// One classic Runge–Kutta step with the control held constant.
    #[inline]
    pub fn rk4_step(&self, x: &StateVec, u: &ControlVec, h: f64) -> StateVec {
        let k1 = self.derivative(x, u);
        let k2 = self.derivative(&(x + k1 * (0.5 * h)), u);
        let k3 = self.derivative(&(x + k2 * (0.5 * h)), u);
        let k4 = self.derivative(&(x + k3 * h), u);
        x + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0)
    }
}

#[inline]
pub fn position(x: &StateVec) -> PartialState {
    PartialState::new(x[0], x[1])
}

#[inline]
pub fn with_position(x: &StateVec, p: &PartialState) -> StateVec {
    StateVec::new(p[0], p[1], x[2], x[3])
}

pub fn state_from_slice(v: &[f64]) -> Result<StateVec> {
    if v.len() != STATE_DIM {
        return Err(Error::DimensionMismatch {
            expected: STATE_DIM,
            got: v.len(),
        });
    }
    Ok(StateVec::from_column_slice(v))
}

/// Time-indexed states with zero-order-hold controls; `controls[k]` acts on
/// `[times[k], times[k+1])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVec>,
    pub controls: Vec<ControlVec>,
    pub cost: f64,
}

impl Trajectory {
    /// A zero-duration trajectory sitting at `x`.
    pub fn stationary(x: StateVec) -> Self {
        Self {
            times: vec![0.0],
            states: vec![x],
            controls: Vec::new(),
            cost: 0.0,
        }
    }

    pub fn start_state(&self) -> &StateVec {
        &self.states[0]
    }

    pub fn final_state(&self) -> &StateVec {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn duration(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0) - self.times[0]
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    /// Appends `next`, which must start where `self` ends. Times of `next`
    /// are shifted to continue after `self`.
    pub fn append(&mut self, next: &Trajectory) {
        let t0 = self.times.last().copied().unwrap_or(0.0) - next.times[0];
        self.times
            .extend(next.times.iter().skip(1).map(|t| t + t0));
        self.states.extend(next.states.iter().skip(1).copied());
        self.controls.extend(next.controls.iter().copied());
        self.cost += next.cost;
    }

    /// Re-integrates the stored controls from the first stored state with
    /// the same step sizes; used to verify dynamic feasibility.
    pub fn resimulate(&self, system: &SystemModel) -> Result<Vec<StateVec>> {
        let mut x = self.states[0];
        let mut out = Vec::with_capacity(self.states.len());
        out.push(x);
        for (k, u) in self.controls.iter().enumerate() {
            let h = self.times[k + 1] - self.times[k];
            x = system.normalize(system.rk4_step(&x, &system.clamp_control(u), h));
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::IntegrationFailure { t: self.times[k + 1] });
            }
            out.push(x);
        }
        Ok(out)
    }

    /// Largest deviation between stored states and a re-simulation.
    pub fn resimulation_error(&self, system: &SystemModel) -> Result<f64> {
        let sim = self.resimulate(system)?;
        Ok(sim
            .iter()
            .zip(&self.states)
            .map(|(a, b)| system.state_distance(a, b))
            .fold(0.0, f64::max))
    }
}

/// Trapezoidal quadrature of `1 + uᵀRu` under zero-order-hold controls.
pub fn trajectory_cost(traj: &Trajectory, system: &SystemModel) -> f64 {
    traj.controls
        .iter()
        .enumerate()
        .map(|(k, u)| {
            let h = traj.times[k + 1] - traj.times[k];
            // both ends of the interval see the held control
            let c = system.running_cost(u);
            0.5 * h * (c + c)
        })
        .sum()
}

/// Shifts every state's position by `offset`; times, controls and cost are kept.
pub fn translate(traj: &Trajectory, offset: &PartialState) -> Trajectory {
    Trajectory {
        times: traj.times.clone(),
        states: traj
            .states
            .iter()
            .map(|x| with_position(x, &(position(x) + offset)))
            .collect(),
        controls: traj.controls.clone(),
        cost: traj.cost,
    }
}

/// Fixed-step RK4 with zero-order-hold controls sampled from `control` at the
/// start of each step. Controls are clamped to the system's box. The final
/// step is shortened so the trajectory ends exactly at `horizon`.
pub fn integrate_rk4(
    system: &SystemModel,
    x0: &StateVec,
    control: impl Fn(f64) -> ControlVec,
    dt: f64,
    horizon: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !(horizon >= dt) || !horizon.is_finite() {
        return Err(contract(format!(
            "integrate_rk4 requires dt > 0 and horizon >= dt (dt = {dt}, horizon = {horizon})"
        )));
    }
    let steps = ((horizon / dt) - 1e-9).ceil().max(1.0) as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut controls = Vec::with_capacity(steps);
    let mut x = system.normalize(*x0);
    let mut t = 0.0;
    times.push(t);
    states.push(x);
    for k in 0..steps {
        let t_next = if k + 1 == steps {
            horizon
        } else {
            (k + 1) as f64 * dt
        };
        let u = system.clamp_control(&control(t));
        x = system.normalize(system.rk4_step(&x, &u, t_next - t));
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::IntegrationFailure { t: t_next });
        }
        t = t_next;
        times.push(t);
        states.push(x);
        controls.push(u);
    }
    let mut traj = Trajectory {
        times,
        states,
        controls,
        cost: 0.0,
    };
    traj.cost = trajectory_cost(&traj, system);
    Ok(traj)
}

/// Writes `t,x1..x4,u1,u2`; the last row leaves the control columns blank.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "x1", "x2", "x3", "x4", "u1", "u2"])?;
    for (k, (t, x)) in traj.times.iter().zip(&traj.states).enumerate() {
        let mut rec: Vec<String> = Vec::with_capacity(7);
        rec.push(fmt_f64(*t));
        rec.extend(x.iter().map(|v| fmt_f64(*v)));
        match traj.controls.get(k) {
            Some(u) => rec.extend(u.iter().map(|v| fmt_f64(*v))),
            None => rec.extend([String::new(), String::new()]),
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a trajectory CSV and recomputes its cost for `system`.
pub fn read_trajectory_csv<R: Read>(input: R, system: &SystemModel) -> Result<Trajectory> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    let expected = ["t", "x1", "x2", "x3", "x4", "u1", "u2"];
    if header.len() != expected.len() || header.iter().zip(expected).any(|(a, b)| a.trim() != b) {
        return Err(Error::Parse(format!(
            "trajectory header must be {}, got {:?}",
            expected.join(","),
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut controls = Vec::new();
    let mut open_row = false;
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != expected.len() {
            return Err(Error::DimensionMismatch {
                expected: expected.len(),
                got: rec.len(),
            });
        }
        if open_row {
            return Err(Error::Parse("only the last row may omit controls".into()));
        }
        let t = parse_finite(&rec[0])?;
        if let Some(&prev) = times.last() {
            if !(t > prev) {
                return Err(Error::Parse("times must be strictly increasing".into()));
            }
        }
        let mut x = StateVec::zeros();
        for i in 0..STATE_DIM {
            x[i] = parse_finite(&rec[1 + i])?;
        }
        times.push(t);
        states.push(x);
        let (a, b) = (rec[5].trim(), rec[6].trim());
        if a.is_empty() && b.is_empty() {
            open_row = true;
        } else {
            controls.push(ControlVec::new(parse_finite(a)?, parse_finite(b)?));
        }
    }
    if states.is_empty() {
        return Err(Error::Parse("trajectory has no rows".into()));
    }
    if controls.len() + 1 != states.len() {
        return Err(Error::Parse("the last row must omit controls".into()));
    }
    let mut traj = Trajectory {
        times,
        states,
        controls,
        cost: 0.0,
    };
    traj.cost = trajectory_cost(&traj, system);
    Ok(traj)
}

pub(crate) fn parse_finite(s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("not a number: {s:?}")))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("non-finite value: {s:?}")));
    }
    Ok(v)
}

/// Shortest round-trip decimal representation.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}
