use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::index::GridIndex;
use super::tree::Tree;
use super::{final_position_error, sample_free, Event, Outcome, PlanQuery, PlanResult, PlanStats, PlannerKind};
use crate::dynamics::{position, Trajectory};
use crate::error::{Error, Result};

/// Connection from a vertex to the goal position. Its cost never changes
/// (vertex states are fixed); its validity is checked on first use.
struct GoalLink {
    vertex: usize,
    seg: f64,
    edge: Option<Option<Trajectory>>,
}

pub(super) fn run(q: &PlanQuery<'_>) -> Result<PlanResult> {
    if !q.backend.is_exact() {
        return Err(Error::Unsupported(
            "Kino-RRT* rewiring needs exact steering, which the learned backend cannot provide".into(),
        ));
    }
    let started = Instant::now();
    let s = q.settings;
    let env = &q.problem.env;
    let backend = q.backend;
    let goal = q.problem.goal;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);

    let mut tree = Tree::with_root(q.problem.start);
    let mut index = GridIndex::new(s.radius);
    index.insert(0, position(&q.problem.start));
    let mut links: Vec<GoalLink> = Vec::new();
    let mut stats = PlanStats::default();
    let mut events = Vec::new();
    let mut violations = Vec::new();
    let mut best: Option<(f64, usize)> = None;

    let mut add_link = |tree: &Tree, links: &mut Vec<GoalLink>, v: usize| {
        let x = &tree.get(v).x;
        if (position(x) - goal).norm() <= s.radius {
            if let Some(seg) = backend.segcost_pff(x, &goal) {
                links.push(GoalLink { vertex: v, seg, edge: None });
            }
        }
    };
    add_link(&tree, &mut links, 0);

    for _ in 0..s.samples {
        stats.iterations += 1;
        let sample = sample_free(env, &mut rng)?;
        let nearest = index.nearest(&sample).expect("tree is never empty");
        let from = position(&tree.get(nearest).x);
        let d = (sample - from).norm();
        let target = if d > s.radius { from + (sample - from) * (s.radius / d) } else { sample };
        if env.point_free(&target) {
            extend(q, &mut tree, &mut index, &mut stats, target, &mut add_link, &mut links)?;
        }

        // best goal connection, materialized lazily; rewiring can lower
        // the cost of an already accepted link too
        loop {
            let cand = links
                .iter()
                .enumerate()
                .filter(|(_, l)| !matches!(l.edge, Some(None)))
                .map(|(i, l)| (tree.get(l.vertex).cost + l.seg, i))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let Some((cost, i)) = cand else { break };
            if best.is_some_and(|(b, _)| cost >= b - 1e-12) {
                break;
            }
            let link = &mut links[i];
            if link.edge.is_none() {
                let r = backend.steer_pff(&tree.get(link.vertex).x, &goal);
                stats.steer_calls += 1;
                let ok = r.success && env.trajectory_free(&r.trajectory);
                if !r.success {
                    stats.steer_failures += 1;
                } else if !ok {
                    stats.collision_rejections += 1;
                }
                link.edge = Some(ok.then_some(r.trajectory));
                continue;
            }
            best = Some((cost, i));
            events.push(Event {
                wall_time_s: started.elapsed().as_secs_f64(),
                best_cost: cost,
            });
            break;
        }
        if s.check_every_iteration {
            if let Err(e) = tree.check_consistency(env, backend.tolerance(), false) {
                violations.push(e);
            }
        }
    }

    let wall_time_s = started.elapsed().as_secs_f64();
    let (outcome, cost, solution) = match best {
        Some((_, i)) => {
            let link = &links[i];
            let mut traj = tree.extract_solution(link.vertex);
            let edge = link.edge.as_ref().and_then(|e| e.as_ref()).expect("best link is materialized");
            traj.append(edge);
            debug_assert!(final_position_error(&traj, &goal) <= backend.tolerance());
            (Outcome::Success, Some(traj.cost), Some(traj))
        }
        None => (Outcome::Failure, None, None),
    };
    Ok(PlanResult {
        planner: PlannerKind::KinoRrtStar,
        outcome,
        cost,
        solution,
        tree,
        expansion_costs: Vec::new(),
        events,
        wall_time_s,
        stats,
        violations,
        unvisited: 0,
    })
}

/// Adds a vertex for `target` under its cheapest feasible near parent, then
/// rewires near vertices through it.
fn extend(
    q: &PlanQuery<'_>,
    tree: &mut Tree,
    index: &mut GridIndex,
    stats: &mut PlanStats,
    target: crate::PartialState,
    add_link: &mut impl FnMut(&Tree, &mut Vec<GoalLink>, usize),
    links: &mut Vec<GoalLink>,
) -> Result<()> {
    let (s, env, backend) = (q.settings, &q.problem.env, q.backend);
    let near = index.within(&target, s.radius);
    let mut cands: Vec<(f64, usize)> = near
        .iter()
        .filter_map(|&y| backend.segcost_pff(&tree.get(y).x, &target).map(|c| (tree.get(y).cost + c, y)))
        .collect();
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut added = None;
    for (_, y) in cands {
        let r = backend.steer_pff(&tree.get(y).x, &target);
        stats.steer_calls += 1;
        if !r.success {
            stats.steer_failures += 1;
            continue;
        }
        if !env.trajectory_free(&r.trajectory) {
            stats.collision_rejections += 1;
            continue;
        }
        added = Some((y, tree.add(y, target, r.trajectory, None)));
        break;
    }
    let Some((parent, v)) = added else {
        return Ok(());
    };
    index.insert(v, position(&tree.get(v).x));
    add_link(tree, links, v);

    for y in near {
        if y == parent || tree.is_ancestor(y, v) {
            continue;
        }
        let (vx, yx) = (tree.get(v).x, tree.get(y).x);
        let Some(seg) = backend.segcost_full(&vx, &yx)? else {
            continue;
        };
        if tree.get(v).cost + seg >= tree.get(y).cost - 1e-9 {
            continue;
        }
        let r = backend.steer_full(&vx, &yx)?;
        stats.steer_calls += 1;
        if !r.success {
            stats.steer_failures += 1;
            continue;
        }
        if !env.trajectory_free(&r.trajectory) {
            stats.collision_rejections += 1;
            continue;
        }
        tree.reparent(y, v, r.trajectory);
        stats.rewires += 1;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use crate::environment::{Bounds, Obstacle};
    use crate::linear_steering::LinearSystem;
    use crate::StateVec;

    #[test]
    fn improves_and_stays_consistent() {
        let backend = SteeringBackend::linear(LinearSystem::double_integrator()).unwrap();
        let env = Env::new(
            Bounds::new([0.0, 0.0], [10.0, 10.0]),
            vec![Obstacle::Circle { center: [5.0, 5.0], radius: 1.5 }],
        )
        .unwrap();
        let problem = Problem::new(env, StateVec::new(1.0, 1.0, 0.0, 0.0), PartialState::new(9.0, 9.0)).unwrap();
        let settings = PlannerSettings { samples: 400, seed: 9, check_every_iteration: true, ..Default::default() };
        let q = PlanQuery { problem: &problem, backend: &backend, settings: &settings };
        let r = plan_kino_rrt_star(&q).unwrap();
        assert!(r.is_success());
        assert!(r.violations.is_empty(), "{:?}", r.violations);
        assert!(r.stats.rewires > 0);
        assert!(r.events.windows(2).all(|w| w[1].best_cost < w[0].best_cost));
        let sol = r.solution.unwrap();
        assert!((sol.cost - r.events.last().unwrap().best_cost).abs() <= 1e-6 * sol.cost);
        assert!(problem.env.trajectory_free(&sol));
        assert!(sol.resimulation_error(backend.system()).unwrap() < 1e-3);
        r.tree.check_consistency(&problem.env, 1e-4, true).unwrap();
    }

    #[test]
    fn nearby_goal_connects_from_the_root() {
        let backend = SteeringBackend::linear(LinearSystem::double_integrator()).unwrap();
        let problem = Problem::new(
            Env::empty(Bounds::new([0.0, 0.0], [10.0, 10.0])),
            StateVec::new(5.0, 5.0, 0.0, 0.0),
            PartialState::new(5.8, 5.5),
        )
        .unwrap();
        let settings = PlannerSettings { samples: 1, ..Default::default() };
        let q = PlanQuery { problem: &problem, backend: &backend, settings: &settings };
        let r = plan_kino_rrt_star(&q).unwrap();
        let direct = LinearSystem::double_integrator().steer_pff(&problem.start, &problem.goal);
        assert!(r.cost.unwrap() <= direct.cost + 1e-9);
    }
}
