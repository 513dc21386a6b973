//! Closed-form optimal steering for linear systems with running cost
//! `1 + uᵀRu` and free final time.
//!
//! For a horizon `t` the minimum-effort cost of reaching a target from `x_a`
//! is governed by the weighted controllability Gramian
//!
//! ```text
//! G(t) = ∫₀ᵗ e^{A(t−τ)} B R⁻¹ Bᵀ e^{Aᵀ(t−τ)} dτ
//! ```
//!
//! Full-state steering to `x_b` costs `t + dᵀ G(t)⁻¹ d` with
//! `d = x_b − e^{At} x_a`. Fixing only the position `E x(t) = g` and leaving
//! the remaining components free, the costate of the free components vanishes
//! at `t`, so the terminal costate is `λ = Eᵀ μ` and the cost becomes
//! `t + dᵀ (E G Eᵀ)⁻¹ d` with `d = g − E e^{At} x_a`. In both cases the
//! optimal control is `u(τ) = R⁻¹ Bᵀ e^{Aᵀ(t−τ)} λ`, and the free final time
//! is found by a log-spaced grid search followed by golden-section refinement.
//!
//! `e^{At}` and `G(t)` come out of a single exponential of the augmented
//! matrix `[[A, BR⁻¹Bᵀ], [0, −Aᵀ]]`: its top-left block is `e^{At}` and its
//! top-right block times `e^{Aᵀt}` is `G(t)`.

use nalgebra::{Matrix2, Matrix4, Matrix4x2, SMatrix, SVector, Vector2};

use crate::dynamics::{
    position, ControlVec, PartialState, StateVec, SystemKind, SystemModel, Trajectory, SIM_DT,
};
use crate::error::{contract, Error, Result};
use crate::steering::SteeringResult;

pub type Matrix8 = SMatrix<f64, 8, 8>;
type Vector8 = SVector<f64, 8>;

/// Boundary residual below which a linear steering result counts as exact.
pub const LINEAR_STEER_TOL: f64 = 1e-4;

/// Short edges still get this many steps, so the held controls resolve
/// rapidly varying optimal inputs.
const MIN_STEPS: usize = 10;

/// Free-final-time search settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TfSearch {
    pub t_min: f64,
    pub t_max: f64,
    pub grid_points: usize,
    pub tol: f64,
}

impl Default for TfSearch {
    fn default() -> Self {
        Self {
            t_min: 0.05,
            t_max: 20.0,
            grid_points: 60,
            tol: 1e-4,
        }
    }
}

#[derive(Clone, Debug)]
struct GridEntry {
    t: f64,
    phi: Matrix4<f64>,
    gram: Matrix4<f64>,
}

/// `ẋ = A x + B u` with control weight `R`; the first two states are the
/// position (the constrained part for partial-final-state-free steering).
#[derive(Clone, Debug)]
pub struct LinearSystem {
    a: Matrix4<f64>,
    b: Matrix4x2<f64>,
    r: Matrix2<f64>,
    r_inv_bt: SMatrix<f64, 2, 4>,
    augmented: Matrix8,
    search: TfSearch,
    dt: f64,
    grid: Vec<GridEntry>,
    model: Option<SystemModel>,
}

#[derive(Clone, Copy, Debug)]
enum Target {
    Full(StateVec),
    Position(PartialState),
}

impl LinearSystem {
    pub fn new(a: Matrix4<f64>, b: Matrix4x2<f64>, r: Matrix2<f64>) -> Result<Self> {
        Self::with_search(a, b, r, TfSearch::default())
    }

    pub fn with_search(
        a: Matrix4<f64>,
        b: Matrix4x2<f64>,
        r: Matrix2<f64>,
        search: TfSearch,
    ) -> Result<Self> {
        if (r - r.transpose()).abs().max() > 1e-12 {
            return Err(contract("R must be symmetric"));
        }
        let r_inv = r
            .cholesky()
            .ok_or_else(|| contract("R must be positive definite"))?
            .inverse();
        if !is_controllable(&a, &b) {
            return Err(contract("(A, B) is not controllable"));
        }
        if !(search.t_min > 0.0 && search.t_max > search.t_min && search.grid_points >= 3) {
            return Err(contract("invalid final-time search settings"));
        }
        let q = b * r_inv * b.transpose();
        let mut augmented = Matrix8::zeros();
        augmented.fixed_view_mut::<4, 4>(0, 0).copy_from(&a);
        augmented.fixed_view_mut::<4, 4>(0, 4).copy_from(&q);
        augmented
            .fixed_view_mut::<4, 4>(4, 4)
            .copy_from(&(-a.transpose()));
        let mut sys = Self {
            a,
            b,
            r,
            r_inv_bt: r_inv * b.transpose(),
            augmented,
            search,
            dt: SIM_DT,
            grid: Vec::new(),
            model: None,
        };
        let n = search.grid_points;
        let ratio = (search.t_max / search.t_min).ln() / (n - 1) as f64;
        sys.grid = (0..n)
            .map(|i| {
                let t = if i + 1 == n {
                    search.t_max
                } else {
                    search.t_min * (ratio * i as f64).exp()
                };
                let (phi, gram) = sys.transition_and_gramian(t);
                GridEntry { t, phi, gram }
            })
            .collect();
        Ok(sys)
    }

    /// The planar double integrator with `R = I`.
    pub fn double_integrator() -> Self {
        Self::from_model(&SystemModel::double_integrator()).expect("double integrator is valid")
    }

    /// Linear steering for a [`SystemModel`]; only the double integrator is linear.
    pub fn from_model(model: &SystemModel) -> Result<Self> {
        if model.kind != SystemKind::DoubleIntegrator2D {
            return Err(Error::Unsupported(format!(
                "{} is not a linear system",
                model.kind.name()
            )));
        }
        let mut a = Matrix4::zeros();
        a[(0, 2)] = 1.0;
        a[(1, 3)] = 1.0;
        let mut b = Matrix4x2::zeros();
        b[(2, 0)] = 1.0;
        b[(3, 1)] = 1.0;
        let mut sys = Self::new(a, b, model.r)?;
        sys.model = Some(model.clone());
        Ok(sys)
    }

    pub fn model(&self) -> Option<&SystemModel> {
        self.model.as_ref()
    }

    pub fn a(&self) -> &Matrix4<f64> {
        &self.a
    }

    pub fn b(&self) -> &Matrix4x2<f64> {
        &self.b
    }

    pub fn r(&self) -> &Matrix2<f64> {
        &self.r
    }

    pub fn search(&self) -> &TfSearch {
        &self.search
    }

    /// `(e^{At}, G(t))` from one augmented exponential.
    pub fn transition_and_gramian(&self, t: f64) -> (Matrix4<f64>, Matrix4<f64>) {
        let e = (self.augmented * t).exp();
        let phi: Matrix4<f64> = e.fixed_view::<4, 4>(0, 0).into_owned();
        let upper: Matrix4<f64> = e.fixed_view::<4, 4>(0, 4).into_owned();
        let g = upper * phi.transpose();
        // symmetrize away roundoff
        (phi, (g + g.transpose()) * 0.5)
    }

    /// Weighted controllability Gramian `G(t)`.
    pub fn weighted_gramian(&self, t: f64) -> Result<Matrix4<f64>> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(contract(format!("gramian horizon must be positive, got {t}")));
        }
        Ok(self.transition_and_gramian(t).1)
    }

    fn cost_with(&self, t: f64, phi: &Matrix4<f64>, gram: &Matrix4<f64>, xa: &StateVec, target: &Target) -> f64 {
        let c = match target {
            Target::Full(xb) => {
                let d = xb - phi * xa;
                match gram.cholesky() {
                    Some(ch) => t + d.dot(&ch.solve(&d)),
                    None => f64::INFINITY,
                }
            }
            Target::Position(goal) => {
                let d = goal - position(&(phi * xa));
                let s: Matrix2<f64> = gram.fixed_view::<2, 2>(0, 0).into_owned();
                match s.cholesky() {
                    Some(ch) => t + d.dot(&ch.solve(&d)),
                    None => f64::INFINITY,
                }
            }
        };
        if c.is_finite() {
            c
        } else {
            f64::INFINITY
        }
    }

    /// Terminal costate `λ` for horizon `t`.
    fn costate(&self, phi: &Matrix4<f64>, gram: &Matrix4<f64>, xa: &StateVec, target: &Target) -> Option<StateVec> {
        match target {
            Target::Full(xb) => gram.cholesky().map(|ch| ch.solve(&(xb - phi * xa))),
            Target::Position(goal) => {
                let s: Matrix2<f64> = gram.fixed_view::<2, 2>(0, 0).into_owned();
                let mu: Vector2<f64> = s.cholesky()?.solve(&(goal - position(&(phi * xa))));
                Some(StateVec::new(mu[0], mu[1], 0.0, 0.0))
            }
        }
    }

    /// Full-state steering cost for a fixed horizon `t`.
    pub fn full_cost_at(&self, xa: &StateVec, xb: &StateVec, t: f64) -> f64 {
        let (phi, g) = self.transition_and_gramian(t);
        self.cost_with(t, &phi, &g, xa, &Target::Full(*xb))
    }

    /// Position-only steering cost for a fixed horizon `t`.
    pub fn pff_cost_at(&self, xa: &StateVec, goal: &PartialState, t: f64) -> f64 {
        let (phi, g) = self.transition_and_gramian(t);
        self.cost_with(t, &phi, &g, xa, &Target::Position(*goal))
    }

    /// Minimizes `c(t)` over `[t_min, t_max]`: grid search, then golden section
    /// inside the bracket around the best grid point. `None` when the best
    /// grid point is the upper end (no interior minimum) or nothing is finite.
    fn minimize_tf(&self, xa: &StateVec, target: &Target) -> Option<(f64, f64)> {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, e) in self.grid.iter().enumerate() {
            let c = self.cost_with(e.t, &e.phi, &e.gram, xa, target);
            if c < best.1 {
                best = (i, c);
            }
        }
        let (i, c_grid) = best;
        if !c_grid.is_finite() || i + 1 == self.grid.len() {
            return None;
        }
        let mut lo = if i == 0 { self.grid[0].t } else { self.grid[i - 1].t };
        let mut hi = self.grid[i + 1].t;
        let eval = |t: f64| self.pair_cost(t, xa, target);
        let mut best_t = self.grid[i].t;
        let mut best_c = c_grid;
        const INV_PHI: f64 = 0.618_033_988_749_894_8;
        let mut x1 = hi - INV_PHI * (hi - lo);
        let mut x2 = lo + INV_PHI * (hi - lo);
        let mut f1 = eval(x1);
        let mut f2 = eval(x2);
        while hi - lo > self.search.tol {
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - INV_PHI * (hi - lo);
                f1 = eval(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + INV_PHI * (hi - lo);
                f2 = eval(x2);
            }
            for (t, f) in [(x1, f1), (x2, f2)] {
                if f < best_c {
                    best_c = f;
                    best_t = t;
                }
            }
        }
        // the lower search bound itself is a candidate (coincident boundary conditions)
        if i == 0 {
            let e = &self.grid[0];
            let c0 = self.cost_with(e.t, &e.phi, &e.gram, xa, target);
            if c0 <= best_c {
                best_c = c0;
                best_t = e.t;
            }
        }
        Some((best_t, best_c))
    }

    fn pair_cost(&self, t: f64, xa: &StateVec, target: &Target) -> f64 {
        let (phi, g) = self.transition_and_gramian(t);
        self.cost_with(t, &phi, &g, xa, target)
    }

    /// Optimal cost of reaching the full state `xb` (free final time).
    pub fn segcost_full(&self, xa: &StateVec, xb: &StateVec) -> Option<f64> {
        self.minimize_tf(xa, &Target::Full(*xb)).map(|(_, c)| c)
    }

    /// Optimal cost of reaching position `goal` with the other states free.
    pub fn segcost_linear(&self, xa: &StateVec, goal: &PartialState) -> Option<f64> {
        self.minimize_tf(xa, &Target::Position(*goal)).map(|(_, c)| c)
    }

    /// Fixed-final-state, free-final-time optimal steering.
    pub fn steer_full(&self, xa: &StateVec, xb: &StateVec) -> SteeringResult {
        self.steer(xa, Target::Full(*xb))
    }

    /// Partial-final-state-free steering: only the position is prescribed.
    pub fn steer_pff(&self, xa: &StateVec, goal: &PartialState) -> SteeringResult {
        self.steer(xa, Target::Position(*goal))
    }

    fn steer(&self, xa: &StateVec, target: Target) -> SteeringResult {
        let residual = |x: &StateVec| match &target {
            Target::Full(xb) => (x - xb).norm(),
            Target::Position(g) => (position(x) - g).norm(),
        };
        let Some((tf, cost)) = self.minimize_tf(xa, &target) else {
            return SteeringResult::failure(*xa, residual(xa));
        };
        let (phi, g) = self.transition_and_gramian(tf);
        let Some(lambda) = self.costate(&phi, &g, xa, &target) else {
            return SteeringResult::failure(*xa, residual(xa));
        };
        let trajectory = self.materialize(xa, tf, &(phi.transpose() * lambda));
        let final_state = *trajectory.final_state();
        let endpoint_error = residual(&final_state);
        debug_assert!(
            (trajectory.cost - cost).abs() <= 0.01 * cost,
            "quadrature cost {} disagrees with closed form {}",
            trajectory.cost,
            cost
        );
        SteeringResult {
            trajectory,
            final_state,
            cost,
            tf,
            success: endpoint_error <= LINEAR_STEER_TOL && cost.is_finite(),
            endpoint_error,
        }
    }

    /// Propagates the joint state/costate system `[x; p]` exactly on the
    /// simulation grid. `p0 = e^{Aᵀ tf} λ` is the initial costate. Controls
    /// are interval averages (Simpson) of `u = R⁻¹Bᵀp`, so velocity is
    /// reproduced exactly under zero-order hold.
    fn materialize(&self, xa: &StateVec, tf: f64, p0: &StateVec) -> Trajectory {
        let steps = ((tf / self.dt) - 1e-9).ceil().max(MIN_STEPS as f64) as usize;
        let h = tf / steps as f64;
        let half = (self.augmented * (0.5 * h)).exp();
        let mut z = Vector8::zeros();
        z.fixed_rows_mut::<4>(0).copy_from(xa);
        z.fixed_rows_mut::<4>(4).copy_from(p0);
        let control = |z: &Vector8| -> ControlVec { self.r_inv_bt * z.fixed_rows::<4>(4) };
        let mut times = Vec::with_capacity(steps + 1);
        let mut states = Vec::with_capacity(steps + 1);
        let mut controls = Vec::with_capacity(steps);
        let mut cost = 0.0;
        times.push(0.0);
        states.push(*xa);
        for k in 0..steps {
            let mid = half * z;
            let end = half * mid;
            let u = (control(&z) + control(&mid) * 4.0 + control(&end)) / 6.0;
            cost += h * (1.0 + u.dot(&(self.r * u)));
            controls.push(u);
            times.push(if k + 1 == steps { tf } else { (k + 1) as f64 * h });
            states.push(end.fixed_rows::<4>(0).into_owned());
            z = end;
        }
        Trajectory {
            times,
            states,
            controls,
            cost,
        }
    }
}

fn is_controllable(a: &Matrix4<f64>, b: &Matrix4x2<f64>) -> bool {
    let mut k = SMatrix::<f64, 4, 8>::zeros();
    let mut block = *b;
    for i in 0..4 {
        k.fixed_view_mut::<4, 2>(0, 2 * i).copy_from(&block);
        block = a * block;
    }
    let sv = k.singular_values();
    let max = sv.max();
    max > 0.0 && sv.iter().filter(|s| **s > 1e-9 * max).count() == 4
}
