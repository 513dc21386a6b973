//! End-to-end acceptance checks. Runs every criterion, prints one PASS/FAIL
//! line each, and exits non-zero if any failed.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pffplan::benchmark::{bucket_edges, dominance, flatten_events, run_benchmark, summarize, BenchmarkConfig};
use pffplan::dynamics::{integrate_rk4, position, translate, with_position};
use pffplan::environment::{car_problem, double_integrator_corridor};
use pffplan::learning::{evaluate_rollouts, train_models, InputEncoding, LearnedSteering, Mlp, TrainConfig};
use pffplan::ocp_solver::{generate_dataset, solve_pff_numeric, StateBox, TranscriptionProblem};
use pffplan::planner::{is_monotone, plan, GridIndex, PlanManifest, PlanQuery, PlannerKind, PlannerSettings};
use pffplan::{ControlVec, LinearSystem, PartialState, StateVec, SteeringBackend, SystemModel};

struct Outcome {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn di_box_state(rng: &mut impl Rng) -> StateVec {
    StateBox::double_integrator_local().sample(rng)
}

fn oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let model = SystemModel::double_integrator();
    let lin = LinearSystem::double_integrator();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst_rel, mut worst_residual, mut failures) = (0.0f64, 0.0f64, 0);
    for _ in 0..50 {
        let x0 = di_box_state(&mut rng);
        let exact = lin.steer_pff(&x0, &PartialState::zeros());
        match solve_pff_numeric(&TranscriptionProblem::new(&model, x0, PartialState::zeros())) {
            Ok(num) if num.success && exact.success => {
                worst_rel = worst_rel.max((num.cost - exact.cost).abs() / exact.cost);
            }
            _ => failures += 1,
        }
        let xb = di_box_state(&mut rng);
        let full = lin.steer_full(&x0, &xb);
        if full.success {
            worst_residual = worst_residual.max((full.final_state - xb).norm());
        } else {
            failures += 1;
        }
    }
    let elapsed = started.elapsed();
    verdict(
        failures == 0 && worst_rel <= 0.02 && worst_residual <= 1e-4 && elapsed < Duration::from_secs(120),
        format!(
            "50 instances, worst numeric/closed-form gap {:.3}%, worst full-steering residual {worst_residual:.2e}, {failures} failures, {:.1}s",
            100.0 * worst_rel,
            elapsed.as_secs_f64()
        ),
    )
}

fn pff_dominance() -> Outcome {
    let lin = LinearSystem::double_integrator();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut worst_gap, mut worst_cost, mut worst_state, mut failures) = (f64::NEG_INFINITY, 0.0f64, 0.0f64, 0);
    for _ in 0..100 {
        let xa = di_box_state(&mut rng);
        let goal = PartialState::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
        let pff = lin.steer_pff(&xa, &goal);
        if !pff.success {
            failures += 1;
            continue;
        }
        let mut grid_min = f64::INFINITY;
        for i in 0..21 {
            for j in 0..21 {
                let v = |k: usize| -2.0 + 4.0 * k as f64 / 20.0;
                let xb = StateVec::new(goal.x, goal.y, v(i), v(j));
                if let Some(c) = lin.segcost_full(&xa, &xb) {
                    grid_min = grid_min.min(c);
                }
            }
        }
        worst_gap = worst_gap.max(pff.cost - grid_min);
        let refixed = lin.steer_full(&xa, &pff.final_state);
        worst_cost = worst_cost.max((refixed.cost - pff.cost).abs() / pff.cost);
        if refixed.trajectory.len() != pff.trajectory.len() {
            failures += 1;
            continue;
        }
        for (a, b) in refixed.trajectory.states.iter().zip(&pff.trajectory.states) {
            worst_state = worst_state.max((a - b).norm());
        }
    }
    verdict(
        failures == 0 && worst_gap <= 1e-4 && worst_cost <= 1e-4 && worst_state <= 1e-3,
        format!(
            "100 instances, max(pff - grid min) {worst_gap:.2e}, refix cost gap {worst_cost:.2e}, refix state gap {worst_state:.2e}, {failures} failures"
        ),
    )
}

struct BenchmarkRun {
    outcome: Outcome,
    invariant_detail: (bool, String),
}

fn fig4_ordering() -> BenchmarkRun {
    let started = Instant::now();
    let problem = double_integrator_corridor();
    let backend = SteeringBackend::linear(LinearSystem::double_integrator()).unwrap();
    let cfg = BenchmarkConfig {
        samples: vec![500, 1000, 2000],
        seeds: (0..10).collect(),
        ..Default::default()
    };
    let records = run_benchmark(&problem, &backend, &cfg).unwrap();
    let events = flatten_events(&records);
    let rows = summarize(&cfg.planners, &events, &cfg.seeds, &bucket_edges(&records, cfg.buckets));
    let full = dominance(&rows, PlannerKind::FmtPff, PlannerKind::FmtFull, false);
    let rrt = dominance(&rows, PlannerKind::FmtPff, PlannerKind::KinoRrtStar, true);
    let elapsed = started.elapsed();
    let full_ok = full.is_some_and(|(h, n)| h == n);
    let rrt_ok = rrt.is_some_and(|(h, n)| h as f64 >= 0.8 * n as f64);
    let solved = |k: PlannerKind| records.iter().filter(|r| r.planner == k && r.cost.is_some()).count();
    let fmt = |d: Option<(usize, usize)>| d.map(|(h, n)| format!("{h}/{n}")).unwrap_or_else(|| "no shared".into());
    let outcome = verdict(
        full_ok && rrt_ok && elapsed < Duration::from_secs(600),
        format!(
            "fmt_pff <= fmt_full in {} buckets, <= kino_rrt_star in {} buckets; solved runs {}/{}/{} of 30; {:.0}s",
            fmt(full),
            fmt(rrt),
            solved(PlannerKind::FmtPff),
            solved(PlannerKind::FmtFull),
            solved(PlannerKind::KinoRrtStar),
            elapsed.as_secs_f64()
        ),
    );
    let bad: Vec<String> = records
        .iter()
        .filter(|r| !r.violations.is_empty())
        .map(|r| format!("{} m={} seed={}: {:?}", r.planner, r.samples, r.seed, r.violations))
        .collect();
    BenchmarkRun {
        outcome,
        invariant_detail: (bad.is_empty(), format!("{} benchmark runs checked, {} violations {bad:?}", records.len(), bad.len())),
    }
}

struct Learned {
    outcome: Outcome,
    steering: LearnedSteering,
}

fn learned_success() -> Learned {
    let car = SystemModel::kinematic_car();
    let domain = StateBox::car_training();
    let t0 = Instant::now();
    let (data, manifest) = generate_dataset(&car, 2000, 1, &domain).unwrap();
    let t_gen = t0.elapsed();
    let t1 = Instant::now();
    let models = train_models(&data, InputEncoding::HeadingSinCos, &TrainConfig::default()).unwrap();
    let t_train = t1.elapsed();
    let steering = LearnedSteering::new(car, models.controller, models.cost_model, domain).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(999);
    let starts: Vec<StateVec> = (0..1000).map(|_| domain.sample(&mut rng)).collect();
    let t2 = Instant::now();
    let stats = evaluate_rollouts(&steering, &starts);
    let t_eval = t2.elapsed();
    let rate = stats.success_rate();
    let outcome = verdict(
        rate >= 0.9
            && t_gen < Duration::from_secs(1800)
            && t_train < Duration::from_secs(300)
            && t_eval < Duration::from_secs(60),
        format!(
            "{:.1}% of 1000 rollouts within 0.3 m (mean endpoint error {:.3} m); dataset {} rows from {}/2000 solved in {:.0}s, training {:.0}s, evaluation {:.1}s",
            100.0 * rate,
            stats.mean_endpoint_error,
            manifest.rows,
            manifest.solved,
            t_gen.as_secs_f64(),
            t_train.as_secs_f64(),
            t_eval.as_secs_f64()
        ),
    );
    Learned { outcome, steering }
}

fn car_planning(steering: &LearnedSteering) -> Outcome {
    let backend = SteeringBackend::Learned(steering.clone());
    let (mut solved, mut worst_resim, mut bad) = (0, 0.0f64, Vec::new());
    for seed in 0..10 {
        let problem = car_problem(seed).unwrap();
        let settings = PlannerSettings {
            samples: 500,
            radius: 2.5,
            seed,
            ..Default::default()
        };
        let q = PlanQuery { problem: &problem, backend: &backend, settings: &settings };
        let r = plan(PlannerKind::FmtPff, &q).unwrap();
        let Some(sol) = &r.solution else { continue };
        solved += 1;
        let resim = sol.resimulation_error(backend.system()).unwrap();
        worst_resim = worst_resim.max(resim);
        let reached = (position(sol.final_state()) - problem.goal).norm() <= settings.goal_tolerance;
        if resim > 1e-6 || !reached || !problem.env.trajectory_free(sol) {
            bad.push(seed);
        }
    }
    verdict(
        solved >= 8 && bad.is_empty(),
        format!("solved {solved}/10 car environments, worst re-simulation error {worst_resim:.1e}, rejected solutions {bad:?}"),
    )
}

fn near_equivalence() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let cell = rng.random_range(0.2..3.0);
        let mut index = GridIndex::new(cell);
        let pts: Vec<PartialState> = (0..rng.random_range(0..60))
            .map(|_| PartialState::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)))
            .collect();
        for (i, p) in pts.iter().enumerate() {
            index.insert(i, *p);
        }
        let q = PartialState::new(rng.random_range(-12.0..12.0), rng.random_range(-12.0..12.0));
        let r = rng.random_range(0.0..6.0);
        let expected: Vec<usize> = (0..pts.len()).filter(|&i| (pts[i] - q).norm() <= r).collect();
        if index.within(&q, r) != expected {
            mismatches += 1;
        }
    }
    (mismatches == 0, format!("Near vs brute force: {mismatches}/1000 mismatches"))
}

fn gradient_check() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let net = Mlp::new(&[5, 8, 8, 2], InputEncoding::HeadingSinCos, &mut rng).unwrap();
    let input = DMatrix::from_fn(5, 6, |_, _| rng.random_range(-1.0..1.0));
    let targets = DMatrix::from_fn(2, 6, |_, _| rng.random_range(-1.0..1.0));
    let (_, grad) = net.loss_and_grad(input.clone(), &targets);
    let params = net.params();
    let mut worst = 0.0f64;
    let h = 1e-6;
    for i in 0..params.len() {
        let mut probe = net.clone();
        let mut p = params.clone();
        p[i] += h;
        probe.set_params(&p);
        let up = probe.loss(input.clone(), &targets);
        p[i] -= 2.0 * h;
        probe.set_params(&p);
        let down = probe.loss(input.clone(), &targets);
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-3));
    }
    (worst <= 1e-5, format!("backprop vs finite differences: worst relative error {worst:.1e} over {} parameters", params.len()))
}

fn rk4_order() -> (bool, String) {
    let car = SystemModel::kinematic_car();
    let x0 = StateVec::new(0.0, 0.0, 0.2, 1.0);
    let u = |_t: f64| ControlVec::new(0.6, 0.3);
    let reference = *integrate_rk4(&car, &x0, u, 0.001, 2.0).unwrap().final_state();
    let err = |dt: f64| car.state_distance(integrate_rk4(&car, &x0, u, dt, 2.0).unwrap().final_state(), &reference);
    let factor = err(0.1) / err(0.05);
    ((12.0..=20.0).contains(&factor), format!("RK4 halving factor {factor:.2}"))
}

fn translation_invariance(learned: &LearnedSteering) -> (bool, String) {
    let lin = LinearSystem::double_integrator();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let (mut worst_lin, mut worst_learned) = (0.0f64, 0.0f64);
    let compare = |base: &pffplan::SteeringResult, moved: &pffplan::SteeringResult, shift: &PartialState| -> f64 {
        let expected = translate(&base.trajectory, shift);
        let states = expected
            .states
            .iter()
            .zip(&moved.trajectory.states)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        let len = if expected.len() == moved.trajectory.len() { 0.0 } else { f64::INFINITY };
        states.max(len).max((base.cost - moved.cost).abs() / base.cost.max(1.0))
    };
    for _ in 0..20 {
        let shift = PartialState::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
        let xa = di_box_state(&mut rng);
        let goal = PartialState::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
        let base = lin.steer_pff(&xa, &goal);
        let moved = lin.steer_pff(&with_position(&xa, &(position(&xa) + shift)), &(goal + shift));
        worst_lin = worst_lin.max(compare(&base, &moved, &shift));

        let xa = StateBox::car_training().sample(&mut rng);
        let goal = PartialState::zeros();
        let base = learned.steer(&xa, &goal);
        let moved = learned.steer(&with_position(&xa, &(position(&xa) + shift)), &(goal + shift));
        worst_learned = worst_learned.max(compare(&base, &moved, &shift));
    }
    (
        worst_lin <= 1e-6 && worst_learned <= 1e-6,
        format!("translation invariance: linear {worst_lin:.1e}, learned {worst_learned:.1e}"),
    )
}

fn fmt_monotonicity() -> (bool, String) {
    let problem = double_integrator_corridor();
    let backend = SteeringBackend::linear(LinearSystem::double_integrator()).unwrap();
    let mut ok = true;
    let mut runs = 0;
    for kind in [PlannerKind::FmtPff, PlannerKind::FmtFull] {
        for seed in 0..2 {
            let settings = PlannerSettings { samples: 300, seed, check_every_iteration: true, ..Default::default() };
            let q = PlanQuery { problem: &problem, backend: &backend, settings: &settings };
            let r = plan(kind, &q).unwrap();
            ok &= r.violations.is_empty() && is_monotone(&r.expansion_costs);
            runs += 1;
        }
    }
    (ok, format!("per-iteration tree checks on {runs} ordered-search runs"))
}

fn invariants(bench: (bool, String), learned: &LearnedSteering) -> Outcome {
    let parts = [
        bench,
        fmt_monotonicity(),
        near_equivalence(),
        gradient_check(),
        rk4_order(),
        translation_invariance(learned),
    ];
    verdict(
        parts.iter().all(|p| p.0),
        parts.iter().map(|p| p.1.clone()).collect::<Vec<_>>().join("; "),
    )
}

fn manifest_json(kind: PlannerKind, backend: &SteeringBackend, problem: &pffplan::environment::Problem, settings: &PlannerSettings) -> serde_json::Value {
    let q = PlanQuery { problem, backend, settings };
    let r = plan(kind, &q).unwrap();
    let mut v = serde_json::to_value(PlanManifest::new(&q, &r)).unwrap();
    v.as_object_mut().unwrap().remove("wall_time_s");
    v
}

fn determinism(learned: &LearnedSteering) -> Outcome {
    let linear = SteeringBackend::linear(LinearSystem::double_integrator()).unwrap();
    let corridor = double_integrator_corridor();
    let settings = PlannerSettings { samples: 500, seed: 3, ..Default::default() };
    let mut same = 0;
    let mut total = 0;
    for kind in PlannerKind::ALL {
        total += 1;
        let a = serde_json::to_vec(&manifest_json(kind, &linear, &corridor, &settings)).unwrap();
        let b = serde_json::to_vec(&manifest_json(kind, &linear, &corridor, &settings)).unwrap();
        same += usize::from(a == b);
    }
    let car = SteeringBackend::Learned(learned.clone());
    let problem = car_problem(4).unwrap();
    let settings = PlannerSettings { samples: 300, radius: 2.5, seed: 4, ..Default::default() };
    total += 1;
    same += usize::from(manifest_json(PlannerKind::FmtPff, &car, &problem, &settings) == manifest_json(PlannerKind::FmtPff, &car, &problem, &settings));

    let model = SystemModel::kinematic_car();
    let bytes = || {
        let (d, _) = generate_dataset(&model, 20, 5, &StateBox::car_training()).unwrap();
        let mut csv = Vec::new();
        d.write_csv(&mut csv).unwrap();
        let cfg = TrainConfig { epochs: 3, ..Default::default() };
        let m = train_models(&d, InputEncoding::HeadingSinCos, &cfg).unwrap();
        let mut json = Vec::new();
        m.controller.write_json(&mut json).unwrap();
        (csv, json)
    };
    total += 1;
    same += usize::from(bytes() == bytes());
    verdict(same == total, format!("{same}/{total} repeated runs byte-identical (plan manifests, dataset and model files)"))
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |n: usize, name: &'static str, o: Outcome| {
        println!("criterion {n} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };
    report(1, "linear oracle equivalence", oracle_equivalence());
    report(2, "PFF dominance and equivalence", pff_dominance());
    let bench = fig4_ordering();
    report(3, "cost-versus-time ordering", bench.outcome);
    let learned = learned_success();
    report(4, "learned steering success", learned.outcome);
    report(5, "car planning feasibility", car_planning(&learned.steering));
    report(6, "invariant suites", invariants(bench.invariant_detail, &learned.steering));
    report(7, "determinism", determinism(&learned.steering));
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
