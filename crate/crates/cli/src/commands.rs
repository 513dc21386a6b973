use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use pffplan::benchmark::{
    bucket_edges, dominance, flatten_events, read_summary_csv, run_benchmark, summarize, write_events_csv as write_bench_events,
    write_runs_csv, write_summary_csv, BenchmarkConfig,
};
use pffplan::dynamics::{position, read_trajectory_csv, write_trajectory_csv};
use pffplan::environment::Env;
use pffplan::learning::{evaluate_rollouts, train_models, Dataset, InputEncoding, LearnedSteering, Mlp, TrainReport};
use pffplan::ocp_solver::generate_dataset_with;
use pffplan::planner::{
    default_radius, plan as run_planner, write_events_csv, PlanManifest, PlanQuery, PlannerKind, PlannerSettings, TreeFile,
};
use pffplan::plot::{benchmark_svg, plan_svg};
use pffplan::{SystemKind, SystemModel};

use crate::config::{create, open, training_box, BenchCmdConfig, GenDataConfig, PlanCmdConfig, TrainCmdConfig};
use crate::UsageError;

fn write_with(path: &Path, f: impl FnOnce(&mut dyn Write) -> pffplan::Result<()>) -> anyhow::Result<()> {
    let mut w = create(path)?;
    f(&mut w).with_context(|| format!("writing {}", path.display()))?;
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn out_dir(p: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

pub fn gen_data(c: &GenDataConfig) -> anyhow::Result<()> {
    if c.n == 0 {
        bail!(UsageError("--n must be at least 1".into()));
    }
    if c.num_nodes < 2 {
        bail!(UsageError("--num-nodes must be at least 2".into()));
    }
    let system = SystemModel::for_kind(c.system);
    let (data, manifest) = generate_dataset_with(
        &system,
        c.n,
        c.seed,
        &training_box(c.system),
        c.num_nodes,
        &Default::default(),
    )?;
    out_dir(&c.out)?;
    write_with(&c.out.join("dataset.csv"), |w| data.write_csv(w))?;
    write_json(&c.out.join("manifest.json"), &manifest)?;
    println!(
        "solved {}/{} (success rate {:.4}), {} rows -> {}",
        manifest.solved,
        manifest.requested,
        manifest.success_rate,
        manifest.rows,
        c.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ModelSummary {
    best_epoch: usize,
    best_validation_loss: f64,
    train_rows: usize,
    validation_rows: usize,
}

impl From<&TrainReport> for ModelSummary {
    fn from(r: &TrainReport) -> Self {
        Self {
            best_epoch: r.best_epoch,
            best_validation_loss: r.best_validation_loss(),
            train_rows: r.train_rows,
            validation_rows: r.validation_rows,
        }
    }
}

/// Mean squared errors in physical units.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct HoldoutMetrics {
    pub rows: usize,
    pub control_mse: f64,
    pub cost_rows: usize,
    pub cost_mse: f64,
}

pub fn holdout_metrics(controller: &Mlp, cost_model: &Mlp, data: &Dataset) -> HoldoutMetrics {
    let mut control = 0.0;
    for (x, u) in data.inputs.iter().zip(&data.control_targets) {
        let p = controller.predict(x);
        control += (p[0] - u[0]).powi(2) + (p[1] - u[1]).powi(2);
    }
    let (mut cost, mut cost_rows) = (0.0, 0);
    for (x, c) in data.cost_rows() {
        cost += (cost_model.predict(x)[0] - c).powi(2);
        cost_rows += 1;
    }
    HoldoutMetrics {
        rows: data.len(),
        control_mse: control / (2 * data.len().max(1)) as f64,
        cost_rows,
        cost_mse: cost / cost_rows.max(1) as f64,
    }
}

#[derive(Serialize)]
struct RolloutSummary {
    attempts: usize,
    successes: usize,
    success_rate: f64,
    mean_endpoint_error: f64,
}

#[derive(Serialize)]
struct TrainSummary {
    system: SystemKind,
    controller: ModelSummary,
    cost_model: ModelSummary,
    holdout: Option<HoldoutMetrics>,
    rollouts: Option<RolloutSummary>,
}

fn read_dataset(path: &Path) -> anyhow::Result<Dataset> {
    Dataset::read_csv(open(path)?).with_context(|| format!("reading {}", path.display()))
}

pub fn train(c: &TrainCmdConfig) -> anyhow::Result<()> {
    c.train.validate()?;
    let data = read_dataset(&c.data)?;
    let encoding = match c.system {
        SystemKind::KinematicCar => InputEncoding::HeadingSinCos,
        SystemKind::DoubleIntegrator2D => InputEncoding::Raw,
    };
    let models = train_models(&data, encoding, &c.train)?;
    out_dir(&c.out)?;
    write_with(&c.out.join("controller.json"), |w| models.controller.write_json(w))?;
    write_with(&c.out.join("cost_model.json"), |w| models.cost_model.write_json(w))?;
    write_with(&c.out.join("controller_loss.csv"), |w| models.controller_report.write_csv(w))?;
    write_with(&c.out.join("cost_model_loss.csv"), |w| models.cost_report.write_csv(w))?;

    let holdout = match &c.holdout {
        Some(p) => Some(holdout_metrics(&models.controller, &models.cost_model, &read_dataset(p)?)),
        None => None,
    };
    let rollouts = if c.rollouts > 0 {
        let domain = training_box(c.system);
        let steer = LearnedSteering::new(
            SystemModel::for_kind(c.system),
            models.controller.clone(),
            models.cost_model.clone(),
            domain,
        )?;
        let mut rng = ChaCha8Rng::seed_from_u64(c.train.seed.wrapping_add(1000));
        let starts: Vec<_> = (0..c.rollouts).map(|_| domain.sample(&mut rng)).collect();
        let s = evaluate_rollouts(&steer, &starts);
        println!("rollouts: {}/{} reached the goal neighborhood", s.successes, s.attempts);
        Some(RolloutSummary {
            attempts: s.attempts,
            successes: s.successes,
            success_rate: s.success_rate(),
            mean_endpoint_error: s.mean_endpoint_error,
        })
    } else {
        None
    };
    let summary = TrainSummary {
        system: c.system,
        controller: (&models.controller_report).into(),
        cost_model: (&models.cost_report).into(),
        holdout,
        rollouts,
    };
    write_json(&c.out.join("train_report.json"), &summary)?;
    println!(
        "controller best validation loss {:.3e} (epoch {}), cost model {:.3e} (epoch {}) -> {}",
        summary.controller.best_validation_loss,
        summary.controller.best_epoch,
        summary.cost_model.best_validation_loss,
        summary.cost_model.best_epoch,
        c.out.display()
    );
    Ok(())
}

fn solution_points(traj: &pffplan::Trajectory) -> Vec<[f64; 2]> {
    traj.states.iter().map(|x| [x[0], x[1]]).collect()
}

pub fn plan(c: &PlanCmdConfig) -> anyhow::Result<()> {
    let problem = c.scenario.problem()?;
    let backend = c.scenario.backend()?;
    let settings = PlannerSettings {
        samples: c.samples,
        radius: c.radius.unwrap_or_else(|| default_radius(c.scenario.system())),
        goal_tolerance: c.goal_tolerance,
        seed: c.seed,
        velocity_range: c.velocity_range,
        check_every_iteration: false,
    };
    let q = PlanQuery {
        problem: &problem,
        backend: &backend,
        settings: &settings,
    };
    let result = run_planner(c.planner, &q)?;

    out_dir(&c.out)?;
    let manifest = PlanManifest::new(&q, &result);
    write_with(&c.out.join("manifest.json"), |w| manifest.write_json(w))?;
    write_with(&c.out.join("env.json"), |w| problem.env.write_json(w))?;
    write_with(&c.out.join("events.csv"), |w| write_events_csv(&result.events, w))?;
    let tree = TreeFile::from_tree(&result.tree);
    write_with(&c.out.join("tree.json"), |w| tree.write_json(w))?;
    let traj_path = c.out.join("trajectory.csv");
    if let Some(sol) = &result.solution {
        write_with(&traj_path, |w| write_trajectory_csv(sol, w))?;
    } else if traj_path.exists() {
        std::fs::remove_file(&traj_path)?;
    }
    let points = result.solution.as_ref().map(solution_points);
    let svg = plan_svg(
        &problem.env,
        [problem.start[0], problem.start[1]],
        [problem.goal.x, problem.goal.y],
        Some(&tree),
        points.as_deref(),
    );
    std::fs::write(c.out.join("plan.svg"), svg)?;
    match result.cost {
        Some(cost) => println!(
            "{}: success, cost {cost:.4}, {} vertices, {:.3} s -> {}",
            c.planner,
            result.tree.len(),
            result.wall_time_s,
            c.out.display()
        ),
        None => println!(
            "{}: failure, {} vertices, {:.3} s -> {}",
            c.planner,
            result.tree.len(),
            result.wall_time_s,
            c.out.display()
        ),
    }
    Ok(())
}

pub fn benchmark(c: &BenchCmdConfig) -> anyhow::Result<()> {
    let problem = c.scenario.problem()?;
    let backend = c.scenario.backend()?;
    let cfg = BenchmarkConfig {
        planners: c.planners.clone(),
        samples: c.samples.clone(),
        seeds: (0..c.seeds).collect(),
        radius: c.radius.unwrap_or_else(|| default_radius(c.scenario.system())),
        goal_tolerance: c.goal_tolerance,
        buckets: c.buckets,
        check_invariants: true,
    };
    cfg.validate()?;
    let records = run_benchmark(&problem, &backend, &cfg)?;
    let events = flatten_events(&records);
    let edges = bucket_edges(&records, cfg.buckets);
    let summary = summarize(&cfg.planners, &events, &cfg.seeds, &edges);

    out_dir(&c.out)?;
    write_with(&c.out.join("benchmark.csv"), |w| write_runs_csv(&records, w))?;
    write_with(&c.out.join("events.csv"), |w| write_bench_events(&events, w))?;
    write_with(&c.out.join("summary.csv"), |w| write_summary_csv(&summary, w))?;
    std::fs::write(c.out.join("benchmark.svg"), benchmark_svg(&summary))?;

    for k in &cfg.planners {
        let runs: Vec<_> = records.iter().filter(|r| r.planner == *k).collect();
        let solved = runs.iter().filter(|r| r.cost.is_some()).count();
        println!("{k}: solved {solved}/{} runs", runs.len());
    }
    let bad: Vec<_> = records.iter().filter(|r| !r.violations.is_empty()).collect();
    for r in &bad {
        eprintln!("invariant violation in {} m={} seed={}: {:?}", r.planner, r.samples, r.seed, r.violations);
    }
    for other in [PlannerKind::FmtFull, PlannerKind::KinoRrtStar] {
        if let Some((held, n)) = dominance(&summary, PlannerKind::FmtPff, other, other == PlannerKind::KinoRrtStar) {
            println!("fmt_pff median at or below {other} in {held}/{n} buckets");
        }
    }
    println!("results -> {}", c.out.display());
    if !bad.is_empty() {
        bail!("{} runs violated planner invariants", bad.len());
    }
    Ok(())
}

pub fn plot(dir: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let summary = dir.join("summary.csv");
    let manifest = dir.join("manifest.json");
    let (svg, default_name) = if summary.exists() {
        let rows = read_summary_csv(open(&summary)?).with_context(|| format!("reading {}", summary.display()))?;
        (benchmark_svg(&rows), "benchmark.svg")
    } else if manifest.exists() {
        let m = PlanManifest::read_json(open(&manifest)?).with_context(|| format!("reading {}", manifest.display()))?;
        let env = Env::read_json(open(&dir.join("env.json"))?)?;
        let tree = TreeFile::read_json(open(&dir.join("tree.json"))?)?;
        let traj_path = dir.join("trajectory.csv");
        let points = if traj_path.exists() {
            let t = read_trajectory_csv(open(&traj_path)?, &SystemModel::for_kind(m.system))?;
            Some(t.states.iter().map(|x| position(x).into()).collect::<Vec<[f64; 2]>>())
        } else {
            None
        };
        (plan_svg(&env, [m.start[0], m.start[1]], m.goal, Some(&tree), points.as_deref()), "plan.svg")
    } else {
        bail!(UsageError(format!(
            "{} holds neither a plan (manifest.json) nor a benchmark (summary.csv)",
            dir.display()
        )));
    };
    let target = out.map(Path::to_path_buf).unwrap_or_else(|| dir.join(default_name));
    std::fs::write(&target, svg).with_context(|| format!("writing {}", target.display()))?;
    println!("wrote {}", target.display());
    Ok(())
}
