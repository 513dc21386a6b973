use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{position, PartialState, StateVec, Trajectory};
use crate::error::{contract, Result};

/// Arclength step of trajectory collision sampling, in metres.
pub const COLLISION_STEP: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Bounds {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Self { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    /// Closed-box membership.
    pub fn contains(&self, p: &PartialState) -> bool {
        p.x >= self.min[0] && p.x <= self.max[0] && p.y >= self.min[1] && p.y <= self.max[1]
    }

    fn strictly_contains(&self, p: &PartialState) -> bool {
        p.x > self.min[0] && p.x < self.max[0] && p.y > self.min[1] && p.y < self.max[1]
    }

    pub fn sample(&self, rng: &mut impl Rng) -> PartialState {
        PartialState::new(
            rng.random_range(self.min[0]..=self.max[0]),
            rng.random_range(self.min[1]..=self.max[1]),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Obstacle {
    Rect { min: [f64; 2], max: [f64; 2] },
    Circle { center: [f64; 2], radius: f64 },
}

impl Obstacle {
    /// Closed-set membership: the boundary is part of the obstacle.
    pub fn contains(&self, p: &PartialState) -> bool {
        match self {
            Obstacle::Rect { min, max } => p.x >= min[0] && p.x <= max[0] && p.y >= min[1] && p.y <= max[1],
            Obstacle::Circle { center, radius } => {
                (p.x - center[0]).hypot(p.y - center[1]) <= *radius
            }
        }
    }

    /// Distance from `p` to the obstacle (0 inside).
    pub fn distance(&self, p: &PartialState) -> f64 {
        match self {
            Obstacle::Rect { min, max } => {
                let dx = (min[0] - p.x).max(0.0).max(p.x - max[0]);
                let dy = (min[1] - p.y).max(0.0).max(p.y - max[1]);
                dx.hypot(dy)
            }
            Obstacle::Circle { center, radius } => {
                ((p.x - center[0]).hypot(p.y - center[1]) - radius).max(0.0)
            }
        }
    }

    pub fn inflated(&self, margin: f64) -> Obstacle {
        match *self {
            Obstacle::Rect { min, max } => Obstacle::Rect {
                min: [min[0] - margin, min[1] - margin],
                max: [max[0] + margin, max[1] + margin],
            },
            Obstacle::Circle { center, radius } => Obstacle::Circle {
                center,
                radius: radius + margin,
            },
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Obstacle::Rect { min, max } => {
                min.iter().chain(max).all(|v| v.is_finite()) && min[0] <= max[0] && min[1] <= max[1]
            }
            Obstacle::Circle { center, radius } => {
                center.iter().all(|v| v.is_finite()) && radius.is_finite() && *radius > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(contract(format!("malformed obstacle {self:?}")))
        }
    }
}

/// Planar workspace with axis-aligned bounds and obstacles. The robot is a
/// point; use [`Env::inflated`] to account for a footprint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Env {
    pub bounds: Bounds,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
}

impl Env {
    pub fn new(bounds: Bounds, obstacles: Vec<Obstacle>) -> Result<Self> {
        let env = Self { bounds, obstacles };
        env.validate()?;
        Ok(env)
    }

    pub fn empty(bounds: Bounds) -> Self {
        Self {
            bounds,
            obstacles: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.bounds;
        if !b.min.iter().chain(&b.max).all(|v| v.is_finite()) || b.min[0] >= b.max[0] || b.min[1] >= b.max[1] {
            return Err(contract("environment bounds must be finite and non-empty"));
        }
        self.obstacles.iter().try_for_each(Obstacle::validate)
    }

    pub fn inflated(&self, margin: f64) -> Env {
        Env {
            bounds: self.bounds,
            obstacles: self.obstacles.iter().map(|o| o.inflated(margin)).collect(),
        }
    }

    /// Inside the open bounds and outside every (closed) obstacle.
    pub fn point_free(&self, p: &PartialState) -> bool {
        self.bounds.strictly_contains(p) && !self.obstacles.iter().any(|o| o.contains(p))
    }

    /// Checks every stored knot plus evenly spaced points at most
    /// [`COLLISION_STEP`] metres apart on each straight piece between knots.
    /// Thin features crossed between samples can be missed.
    pub fn trajectory_free(&self, traj: &Trajectory) -> bool {
        self.states_free(&traj.states, COLLISION_STEP)
    }

    pub fn states_free(&self, states: &[StateVec], step: f64) -> bool {
        let Some(first) = states.first() else {
            return true;
        };
        let mut prev = position(first);
        if !self.point_free(&prev) {
            return false;
        }
        // each knot interval is subdivided on its own, so a concatenation is
        // free exactly when its pieces are
        for s in &states[1..] {
            let next = position(s);
            let pieces = ((next - prev).norm() / step).ceil().max(1.0) as usize;
            for k in 1..=pieces {
                if !self.point_free(&(prev + (next - prev) * (k as f64 / pieces as f64))) {
                    return false;
                }
            }
            prev = next;
        }
        true
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(input: R) -> Result<Self> {
        let env: Env = serde_json::from_reader(input)?;
        env.validate()?;
        Ok(env)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let env: Env = serde_json::from_str(s)?;
        env.validate()?;
        Ok(env)
    }
}

/// A planning problem: start state and goal position in an environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub env: Env,
    pub start: StateVec,
    pub goal: PartialState,
}

impl Problem {
    pub fn new(env: Env, start: StateVec, goal: PartialState) -> Result<Self> {
        env.validate()?;
        if !start.iter().all(|v| v.is_finite()) || !env.point_free(&position(&start)) {
            return Err(contract("start position must be collision-free and inside the bounds"));
        }
        if !goal.iter().all(|v| v.is_finite()) || !env.point_free(&goal) {
            return Err(contract("goal must be collision-free and inside the bounds"));
        }
        Ok(Self { env, start, goal })
    }
}

/// Parameters of [`random_env`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomEnvParams {
    pub bounds: Bounds,
    /// Inclusive range of the obstacle count.
    pub n_obstacles: (usize, usize),
    /// Range of rectangle side lengths and circle diameters.
    pub size: (f64, f64),
    pub circle_fraction: f64,
    /// Radius of the disks around `keep_free` that obstacles must avoid.
    pub clearance: f64,
    pub keep_free: Vec<[f64; 2]>,
    /// Placement attempts per obstacle before it is dropped.
    pub max_retries: usize,
}

impl Default for RandomEnvParams {
    fn default() -> Self {
        Self {
            bounds: Bounds::new([0.0, 0.0], [10.0, 10.0]),
            n_obstacles: (4, 8),
            size: (0.8, 2.0),
            circle_fraction: 0.4,
            clearance: 0.8,
            keep_free: Vec::new(),
            max_retries: 100,
        }
    }
}

/// Seeded random environment. Obstacles that would come within `clearance`
/// of a protected point are re-drawn up to `max_retries` times, then
/// dropped, so protected disks are always free.
pub fn random_env(seed: u64, params: &RandomEnvParams) -> Result<Env> {
    let (lo, hi) = params.size;
    if params.n_obstacles.0 > params.n_obstacles.1 || !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(contract("invalid random environment ranges"));
    }
    if !(0.0..=1.0).contains(&params.circle_fraction) || !(params.clearance >= 0.0) {
        return Err(contract("circle fraction must be in [0, 1] and clearance non-negative"));
    }
    let mut env = Env::new(params.bounds, Vec::new())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(params.n_obstacles.0..=params.n_obstacles.1);
    let protected: Vec<PartialState> = params.keep_free.iter().map(|p| PartialState::new(p[0], p[1])).collect();
    for _ in 0..count {
        for _ in 0..params.max_retries.max(1) {
            let c = params.bounds.sample(&mut rng);
            let ob = if rng.random_bool(params.circle_fraction) {
                Obstacle::Circle {
                    center: [c.x, c.y],
                    radius: 0.5 * rng.random_range(lo..=hi),
                }
            } else {
                let (w, h) = (rng.random_range(lo..=hi), rng.random_range(lo..=hi));
                Obstacle::Rect {
                    min: [c.x - 0.5 * w, c.y - 0.5 * h],
                    max: [c.x + 0.5 * w, c.y + 0.5 * h],
                }
            };
            if protected.iter().all(|p| ob.distance(p) > params.clearance) {
                env.obstacles.push(ob);
                break;
            }
        }
    }
    Ok(env)
}

/// Default double-integrator benchmark: a 20 m square with two staggered
/// walls forcing an S-shaped route. Start `(2, 2)` at rest, goal `(18, 18)`.
/// An approximation of a corridor-and-blocks layout.
pub fn double_integrator_corridor() -> Problem {
    let env = Env {
        bounds: Bounds::new([0.0, 0.0], [20.0, 20.0]),
        obstacles: vec![
            Obstacle::Rect {
                min: [0.0, 6.0],
                max: [12.0, 7.5],
            },
            Obstacle::Rect {
                min: [8.0, 12.5],
                max: [20.0, 14.0],
            },
        ],
    };
    Problem {
        env,
        start: StateVec::new(2.0, 2.0, 0.0, 0.0),
        goal: PartialState::new(18.0, 18.0),
    }
}

/// Random car planning problem: a 10 m square with start near one corner
/// and goal near the opposite one, both kept clear of obstacles.
pub fn car_problem(seed: u64) -> Result<Problem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ca75);
    let start = PartialState::new(rng.random_range(1.0..2.5), rng.random_range(1.0..2.5));
    let goal = PartialState::new(rng.random_range(7.5..9.0), rng.random_range(7.5..9.0));
    let heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let params = RandomEnvParams {
        keep_free: vec![[start.x, start.y], [goal.x, goal.y]],
        ..Default::default()
    };
    let env = random_env(seed, &params)?;
    Problem::new(env, StateVec::new(start.x, start.y, heading, 0.0), goal)
}
