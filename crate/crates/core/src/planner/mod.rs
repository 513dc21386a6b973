//! FMT*PFF and the two baselines: kinodynamic FMT* with full-state samples
//! and Kino-RRT* with PFF steering and exact rewiring.

mod fmt;
mod index;
mod output;
mod rrt;
mod tree;

use std::cmp::Ordering;
use std::fmt as stdfmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{position, PartialState, SystemKind, Trajectory};
use crate::environment::{Env, Problem};
use crate::error::{contract, Error, Result};
use crate::steering::SteeringBackend;

pub use index::{brute_force_within, GridIndex};
pub use output::{read_events_csv, write_events_csv, PlanManifest, TreeFile, TreeVertexRecord, PLAN_FORMAT_VERSION};
pub use tree::{Tree, Vertex, COST_TOL, JOIN_TOL};

/// Rejection sampling gives up below this acceptance rate.
pub const MIN_ACCEPTANCE: f64 = 1e-4;
const MIN_ATTEMPTS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    FmtPff,
    FmtFull,
    KinoRrtStar,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 3] = [PlannerKind::FmtPff, PlannerKind::FmtFull, PlannerKind::KinoRrtStar];

    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::FmtPff => "fmt_pff",
            PlannerKind::FmtFull => "fmt_full",
            PlannerKind::KinoRrtStar => "kino_rrt_star",
        }
    }
}

impl stdfmt::Display for PlannerKind {
    fn fmt(&self, f: &mut stdfmt::Formatter<'_>) -> stdfmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlannerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlannerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown planner {s:?}")))
    }
}

/// Neighbor radius used when none is given.
pub fn default_radius(kind: SystemKind) -> f64 {
    match kind {
        SystemKind::DoubleIntegrator2D => 1.5,
        SystemKind::KinematicCar => 2.5,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerSettings {
    /// Number of samples (FMT variants) or iterations (Kino-RRT*).
    pub samples: usize,
    pub radius: f64,
    pub goal_tolerance: f64,
    pub seed: u64,
    /// Full-state samples draw each velocity component from `[-v, v]`.
    pub velocity_range: f64,
    /// Check tree consistency and sample conservation after every
    /// iteration (slow; for testing).
    pub check_every_iteration: bool,
}

impl Default for PlannerSettings {
    fn default() -> Self {
        Self {
            samples: 1000,
            radius: 1.5,
            goal_tolerance: 0.3,
            seed: 0,
            velocity_range: 2.0,
            check_every_iteration: false,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PlanQuery<'a> {
    pub problem: &'a Problem,
    pub backend: &'a SteeringBackend,
    pub settings: &'a PlannerSettings,
}

impl PlanQuery<'_> {
    pub fn validate(&self) -> Result<()> {
        let p = self.problem;
        Problem::new(p.env.clone(), p.start, p.goal)?;
        let s = self.settings;
        if s.samples == 0 {
            return Err(contract("sample count must be at least 1"));
        }
        if !(s.radius > 0.0 && s.radius.is_finite()) {
            return Err(contract("neighbor radius must be positive"));
        }
        if s.radius > self.backend.max_radius() {
            return Err(contract(format!(
                "neighbor radius {} exceeds the {} backend's limit {}",
                s.radius,
                self.backend.name(),
                self.backend.max_radius()
            )));
        }
        if !(s.goal_tolerance > 0.0 && s.goal_tolerance.is_finite()) {
            return Err(contract("goal tolerance must be positive"));
        }
        if !(s.velocity_range >= 0.0 && s.velocity_range.is_finite()) {
            return Err(contract("velocity range must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure,
}

/// Best solution cost known at a point in time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub wall_time_s: f64,
    pub best_cost: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanStats {
    pub iterations: usize,
    pub steer_calls: usize,
    pub steer_failures: usize,
    pub collision_rejections: usize,
    pub rewires: usize,
}

#[derive(Clone, Debug)]
pub struct PlanResult {
    pub planner: PlannerKind,
    pub outcome: Outcome,
    pub cost: Option<f64>,
    pub solution: Option<Trajectory>,
    pub tree: Tree,
    /// Cost-to-come of each vertex selected for expansion, in order
    /// (FMT variants).
    pub expansion_costs: Vec<f64>,
    pub events: Vec<Event>,
    pub wall_time_s: f64,
    pub stats: PlanStats,
    /// Invariant violations seen during the run (only collected when
    /// checking every iteration).
    pub violations: Vec<String>,
    /// Samples never connected when the run ended (FMT variants).
    pub unvisited: usize,
}

impl PlanResult {
    pub fn is_success(&self) -> bool {
        self.outcome == Outcome::Success
    }
}

/// Runs one planner on one query.
pub fn plan(kind: PlannerKind, q: &PlanQuery<'_>) -> Result<PlanResult> {
    q.validate()?;
    match kind {
        PlannerKind::FmtPff => fmt::run(q, false),
        PlannerKind::FmtFull => {
            if !q.backend.is_exact() {
                return Err(Error::Unsupported("kinodynamic FMT* needs exact full-state steering".into()));
            }
            fmt::run(q, true)
        }
        PlannerKind::KinoRrtStar => rrt::run(q),
    }
}

pub fn plan_fmt_pff(q: &PlanQuery<'_>) -> Result<PlanResult> {
    plan(PlannerKind::FmtPff, q)
}

pub fn plan_fmt_full(q: &PlanQuery<'_>) -> Result<PlanResult> {
    plan(PlannerKind::FmtFull, q)
}

pub fn plan_kino_rrt_star(q: &PlanQuery<'_>) -> Result<PlanResult> {
    plan(PlannerKind::KinoRrtStar, q)
}

/// Draws one collision-free position; errors if the acceptance rate is
/// hopeless.
pub fn sample_free(env: &Env, rng: &mut impl Rng) -> Result<PartialState> {
    let mut attempts = 0usize;
    loop {
        attempts += 1;
        let p = env.bounds.sample(rng);
        if env.point_free(&p) {
            return Ok(p);
        }
        if attempts >= MIN_ATTEMPTS && 1.0 / (attempts as f64) < MIN_ACCEPTANCE {
            return Err(Error::EnvironmentTooDense { accepted: 0, attempts });
        }
    }
}

/// `m` uniform collision-free positions.
pub fn sample_pff(env: &Env, m: usize, rng: &mut impl Rng) -> Result<Vec<PartialState>> {
    if m == 0 {
        return Err(contract("sample count must be at least 1"));
    }
    let mut out = Vec::with_capacity(m);
    let mut attempts = 0usize;
    while out.len() < m {
        attempts += 1;
        let p = env.bounds.sample(rng);
        if env.point_free(&p) {
            out.push(p);
        }
        if attempts >= MIN_ATTEMPTS && (out.len() as f64) < MIN_ACCEPTANCE * attempts as f64 {
            return Err(Error::EnvironmentTooDense {
                accepted: out.len(),
                attempts,
            });
        }
    }
    Ok(out)
}

/// Open-set key: ordered by cost, ties by vertex id.
#[derive(Clone, Copy, Debug, PartialEq)]
struct OpenKey {
    cost: f64,
    id: usize,
}

impl Eq for OpenKey {}

impl PartialOrd for OpenKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OpenKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost.total_cmp(&other.cost).then(self.id.cmp(&other.id))
    }
}

/// Whether the expansion order never decreased in cost.
pub fn is_monotone(costs: &[f64]) -> bool {
    costs.windows(2).all(|w| w[1] >= w[0] - COST_TOL * (1.0 + w[0].abs()))
}

fn final_position_error(traj: &Trajectory, goal: &PartialState) -> f64 {
    (position(traj.final_state()) - goal).norm()
}
