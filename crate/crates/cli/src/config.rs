//! Run configuration: optional JSON file, then command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use pffplan::environment::{car_problem, double_integrator_corridor, Env, Problem};
use pffplan::learning::{LearnedSteering, Mlp};
use pffplan::ocp_solver::StateBox;
use pffplan::planner::PlannerKind;
use pffplan::{LinearSystem, PartialState, StateVec, SteeringBackend, SystemKind, SystemModel};

use crate::UsageError;

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> anyhow::Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
}

pub fn training_box(system: SystemKind) -> StateBox {
    match system {
        SystemKind::KinematicCar => StateBox::car_training(),
        SystemKind::DoubleIntegrator2D => StateBox::double_integrator_local(),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenDataConfig {
    pub system: SystemKind,
    pub n: usize,
    pub seed: u64,
    pub num_nodes: usize,
    pub out: PathBuf,
}

impl Default for GenDataConfig {
    fn default() -> Self {
        Self {
            system: SystemKind::KinematicCar,
            n: 2000,
            seed: 0,
            num_nodes: 40,
            out: "data".into(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCmdConfig {
    pub system: SystemKind,
    pub data: PathBuf,
    /// Dataset used only for the reported held-out metrics.
    pub holdout: Option<PathBuf>,
    /// Fresh rollouts from the training box used to report steering success.
    pub rollouts: usize,
    pub train: pffplan::learning::TrainConfig,
    pub out: PathBuf,
}

impl Default for TrainCmdConfig {
    fn default() -> Self {
        Self {
            system: SystemKind::KinematicCar,
            data: "data/dataset.csv".into(),
            holdout: None,
            rollouts: 0,
            train: Default::default(),
            out: "models".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Fixture {
    Corridor,
    Car,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Linear,
    Learned,
}

/// Problem and steering backend shared by `plan` and `benchmark`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub fixture: Option<Fixture>,
    pub problem_seed: u64,
    pub env: Option<PathBuf>,
    pub start: Option<[f64; 4]>,
    pub goal: Option<[f64; 2]>,
    pub backend: BackendKind,
    /// Defaults to the double integrator for the linear backend and to the car
    /// for the learned one.
    pub system: Option<SystemKind>,
    pub controller: Option<PathBuf>,
    pub cost_model: Option<PathBuf>,
}

impl Scenario {
    pub fn system(&self) -> SystemKind {
        self.system.unwrap_or(match self.backend {
            BackendKind::Linear => SystemKind::DoubleIntegrator2D,
            BackendKind::Learned => SystemKind::KinematicCar,
        })
    }

    pub fn problem(&self) -> anyhow::Result<Problem> {
        let base = match (self.env.as_ref(), self.fixture) {
            (Some(_), Some(_)) => bail!(UsageError("give either an environment file or a fixture".into())),
            (Some(path), None) => {
                let env = Env::read_json(open(path)?).with_context(|| format!("reading {}", path.display()))?;
                let (Some(s), Some(g)) = (self.start, self.goal) else {
                    bail!(UsageError("an environment file needs --start and --goal".into()));
                };
                return Ok(Problem::new(env, StateVec::from(s), PartialState::from(g))?);
            }
            (None, Some(Fixture::Car)) => car_problem(self.problem_seed)?,
            (None, Some(Fixture::Corridor)) | (None, None) => double_integrator_corridor(),
        };
        let start = self.start.map(StateVec::from).unwrap_or(base.start);
        let goal = self.goal.map(PartialState::from).unwrap_or(base.goal);
        Ok(Problem::new(base.env, start, goal)?)
    }

    pub fn backend(&self) -> anyhow::Result<SteeringBackend> {
        let system = self.system();
        match self.backend {
            BackendKind::Linear => {
                if system != SystemKind::DoubleIntegrator2D {
                    bail!(UsageError("the linear backend is only available for the double integrator".into()));
                }
                Ok(SteeringBackend::linear(LinearSystem::double_integrator())?)
            }
            BackendKind::Learned => {
                let (Some(c), Some(k)) = (&self.controller, &self.cost_model) else {
                    bail!(UsageError("the learned backend needs --controller and --cost-model".into()));
                };
                let controller = Mlp::read_json(open(c)?).with_context(|| format!("reading {}", c.display()))?;
                let cost = Mlp::read_json(open(k)?).with_context(|| format!("reading {}", k.display()))?;
                let steer = LearnedSteering::new(SystemModel::for_kind(system), controller, cost, training_box(system))?;
                Ok(SteeringBackend::Learned(steer))
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanCmdConfig {
    pub planner: PlannerKind,
    pub scenario: Scenario,
    pub samples: usize,
    /// Defaults to the system's usual neighbor radius.
    pub radius: Option<f64>,
    pub goal_tolerance: f64,
    pub seed: u64,
    pub velocity_range: f64,
    pub out: PathBuf,
}

impl Default for PlanCmdConfig {
    fn default() -> Self {
        let s = pffplan::planner::PlannerSettings::default();
        Self {
            planner: PlannerKind::FmtPff,
            scenario: Scenario::default(),
            samples: s.samples,
            radius: None,
            goal_tolerance: s.goal_tolerance,
            seed: s.seed,
            velocity_range: s.velocity_range,
            out: "plan".into(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchCmdConfig {
    pub planners: Vec<PlannerKind>,
    pub scenario: Scenario,
    pub samples: Vec<usize>,
    /// Runs use seeds `0..seeds`.
    pub seeds: u64,
    pub radius: Option<f64>,
    pub goal_tolerance: f64,
    pub buckets: usize,
    pub out: PathBuf,
}

impl Default for BenchCmdConfig {
    fn default() -> Self {
        let b = pffplan::benchmark::BenchmarkConfig::default();
        Self {
            planners: b.planners,
            scenario: Scenario::default(),
            samples: b.samples,
            seeds: b.seeds.len() as u64,
            radius: None,
            goal_tolerance: b.goal_tolerance,
            buckets: b.buckets,
            out: "benchmark".into(),
        }
    }
}

pub fn open(path: &Path) -> anyhow::Result<std::fs::File> {
    std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))
}

pub fn create(path: &Path) -> anyhow::Result<std::io::BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(std::io::BufWriter::new(f))
}
