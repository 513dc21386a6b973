use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::{BackendKind, Fixture, Scenario};
use pffplan::planner::PlannerKind;
use pffplan::SystemKind;

/// Invalid invocation or configuration (exit code 2).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Parser)]
#[command(name = "pffplan", version, about = "Kinodynamic planning with partial-final-state-free steering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve random steering problems numerically and write a training set.
    GenData(GenDataArgs),
    /// Train the controller and cost-to-go networks on a dataset.
    Train(TrainArgs),
    /// Run one planner on one problem.
    Plan(PlanArgs),
    /// Sweep planners, sample counts and seeds; aggregate cost against time.
    Benchmark(BenchArgs),
    /// Re-render the SVG of an existing plan or benchmark directory.
    Plot(PlotArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    system: Option<SystemKind>,
    /// Number of steering problems to solve.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Transcription nodes per trajectory.
    #[arg(long)]
    num_nodes: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    system: Option<SystemKind>,
    /// Dataset CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Extra dataset CSV used only for reporting held-out errors.
    #[arg(long)]
    holdout: Option<PathBuf>,
    /// Number of fresh rollouts used to report steering success.
    #[arg(long)]
    rollouts: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Built-in problem; ignored when --env is given.
    #[arg(long, value_enum)]
    fixture: Option<Fixture>,
    /// Seed of the random car environment.
    #[arg(long)]
    problem_seed: Option<u64>,
    /// Environment JSON file.
    #[arg(long)]
    env: Option<PathBuf>,
    /// Start state as four comma-separated numbers.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    start: Option<Vec<f64>>,
    /// Goal position as two comma-separated numbers.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    goal: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    #[arg(long)]
    system: Option<SystemKind>,
    /// Controller model JSON (learned backend).
    #[arg(long)]
    controller: Option<PathBuf>,
    /// Cost-to-go model JSON (learned backend).
    #[arg(long)]
    cost_model: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    planner: Option<PlannerKind>,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    goal_tolerance: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    velocity_range: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated planner names.
    #[arg(long, value_delimiter = ',')]
    planners: Option<Vec<PlannerKind>>,
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Comma-separated sample counts.
    #[arg(long, value_delimiter = ',')]
    samples: Option<Vec<usize>>,
    /// Number of seeds per planner and sample count.
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    goal_tolerance: Option<f64>,
    #[arg(long)]
    buckets: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Directory written by `plan` or `benchmark`.
    dir: PathBuf,
    /// Output SVG (defaults to the usual name inside the directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn fixed<const N: usize>(v: Vec<f64>, what: &str) -> anyhow::Result<[f64; N]> {
    v.try_into()
        .map_err(|v: Vec<f64>| UsageError(format!("{what} needs {N} numbers, got {}", v.len())).into())
}

impl ScenarioArgs {
    fn apply(self, s: &mut Scenario) -> anyhow::Result<()> {
        if let Some(f) = self.fixture {
            s.fixture = Some(f);
            s.env = None;
        }
        if let Some(p) = self.env {
            s.env = Some(p);
            s.fixture = None;
        }
        s.problem_seed = self.problem_seed.unwrap_or(s.problem_seed);
        if let Some(v) = self.start {
            s.start = Some(fixed(v, "--start")?);
        }
        if let Some(v) = self.goal {
            s.goal = Some(fixed(v, "--goal")?);
        }
        s.backend = self.backend.unwrap_or(s.backend);
        s.system = self.system.or(s.system);
        s.controller = self.controller.or(s.controller.take());
        s.cost_model = self.cost_model.or(s.cost_model.take());
        Ok(())
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData(a) => {
            let mut c: config::GenDataConfig = config::load(a.config.as_deref())?;
            c.system = a.system.unwrap_or(c.system);
            c.n = a.n.unwrap_or(c.n);
            c.seed = a.seed.unwrap_or(c.seed);
            c.num_nodes = a.num_nodes.unwrap_or(c.num_nodes);
            c.out = a.out.unwrap_or(c.out);
            commands::gen_data(&c)
        }
        Command::Train(a) => {
            let mut c: config::TrainCmdConfig = config::load(a.config.as_deref())?;
            c.system = a.system.unwrap_or(c.system);
            c.data = a.data.unwrap_or(c.data);
            c.holdout = a.holdout.or(c.holdout);
            c.rollouts = a.rollouts.unwrap_or(c.rollouts);
            c.train.epochs = a.epochs.unwrap_or(c.train.epochs);
            c.train.seed = a.seed.unwrap_or(c.train.seed);
            c.out = a.out.unwrap_or(c.out);
            commands::train(&c)
        }
        Command::Plan(a) => {
            let mut c: config::PlanCmdConfig = config::load(a.config.as_deref())?;
            c.planner = a.planner.unwrap_or(c.planner);
            a.scenario.apply(&mut c.scenario)?;
            c.samples = a.samples.unwrap_or(c.samples);
            c.radius = a.radius.or(c.radius);
            c.goal_tolerance = a.goal_tolerance.unwrap_or(c.goal_tolerance);
            c.seed = a.seed.unwrap_or(c.seed);
            c.velocity_range = a.velocity_range.unwrap_or(c.velocity_range);
            c.out = a.out.unwrap_or(c.out);
            commands::plan(&c)
        }
        Command::Benchmark(a) => {
            let mut c: config::BenchCmdConfig = config::load(a.config.as_deref())?;
            c.planners = a.planners.unwrap_or(c.planners);
            a.scenario.apply(&mut c.scenario)?;
            c.samples = a.samples.unwrap_or(c.samples);
            c.seeds = a.seeds.unwrap_or(c.seeds);
            c.radius = a.radius.or(c.radius);
            c.goal_tolerance = a.goal_tolerance.unwrap_or(c.goal_tolerance);
            c.buckets = a.buckets.unwrap_or(c.buckets);
            c.out = a.out.unwrap_or(c.out);
            commands::benchmark(&c)
        }
        Command::Plot(a) => commands::plot(&a.dir, a.out.as_deref()),
    }
}

fn is_usage(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<UsageError>()
            || matches!(
                c.downcast_ref::<pffplan::Error>(),
                Some(pffplan::Error::Contract(_) | pffplan::Error::Unsupported(_))
            )
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_usage(&e) { 2 } else { 3 })
        }
    }
}
