use std::collections::BTreeSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::index::GridIndex;
use super::tree::Tree;
use super::{sample_pff, Event, OpenKey, Outcome, PlanQuery, PlanResult, PlanStats, PlannerKind};
use crate::dynamics::{position, StateVec};
use crate::error::Result;
use crate::steering::SteeringResult;

/// Ordered search over sampled targets. Target 0 is the goal; with `full`
/// every target is a full state (the goal at rest) steered to exactly,
/// otherwise a position steered to with PFF steering.
pub(super) fn run(q: &PlanQuery<'_>, full: bool) -> Result<PlanResult> {
    let started = Instant::now();
    let s = q.settings;
    let env = &q.problem.env;
    let backend = q.backend;
    let goal = q.problem.goal;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);

    let mut positions = vec![goal];
    positions.extend(sample_pff(env, s.samples, &mut rng)?);
    let full_targets: Vec<StateVec> = if full {
        positions
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if i == 0 {
                    StateVec::new(p.x, p.y, 0.0, 0.0)
                } else {
                    let v = s.velocity_range;
                    let (vx, vy) = if v > 0.0 {
                        (rng.random_range(-v..=v), rng.random_range(-v..=v))
                    } else {
                        (0.0, 0.0)
                    };
                    StateVec::new(p.x, p.y, vx, vy)
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    let reached_goal = |x: &StateVec| {
        if full {
            (x - full_targets[0]).norm() <= s.goal_tolerance
        } else {
            (position(x) - goal).norm() <= s.goal_tolerance
        }
    };

    let mut unvisited = GridIndex::new(s.radius);
    let mut is_unvisited = vec![true; positions.len()];
    for (i, p) in positions.iter().enumerate() {
        unvisited.insert(i, *p);
    }
    let mut tree = Tree::with_root(q.problem.start);
    let mut open = BTreeSet::new();
    let mut open_index = GridIndex::new(s.radius);
    open.insert(OpenKey { cost: 0.0, id: 0 });
    open_index.insert(0, position(&q.problem.start));

    let mut stats = PlanStats::default();
    let mut expansion_costs = Vec::new();
    let mut violations = Vec::new();
    let mut xc = 0usize;
    let outcome = loop {
        let (xc_state, xc_cost) = (tree.get(xc).x, tree.get(xc).cost);
        expansion_costs.push(xc_cost);
        if reached_goal(&xc_state) {
            break Outcome::Success;
        }
        stats.iterations += 1;
        let mut new_open = Vec::new();
        for i in unvisited.within(&position(&xc_state), s.radius) {
            let target = positions[i];
            // cheapest open parent by estimated segment cost, ties to the lowest id
            let mut best: Option<(f64, usize)> = None;
            for y in open_index.within(&target, s.radius) {
                let from = &tree.get(y).x;
                let seg = if full {
                    backend.segcost_full(from, &full_targets[i])?
                } else {
                    backend.segcost_pff(from, &target)
                };
                if let Some(c) = seg {
                    let total = tree.get(y).cost + c;
                    if best.is_none_or(|(b, _)| total < b) {
                        best = Some((total, y));
                    }
                }
            }
            let Some((_, y)) = best else {
                continue;
            };
            let from = tree.get(y).x;
            let res: SteeringResult = if full {
                backend.steer_full(&from, &full_targets[i])?
            } else {
                backend.steer_pff(&from, &target)
            };
            stats.steer_calls += 1;
            if !res.success {
                stats.steer_failures += 1;
                continue;
            }
            if !env.trajectory_free(&res.trajectory) {
                stats.collision_rejections += 1;
                continue;
            }
            let id = tree.add(y, target, res.trajectory, Some(i));
            new_open.push(id);
            unvisited.remove(i, &target);
            is_unvisited[i] = false;
        }
        open.remove(&OpenKey { cost: xc_cost, id: xc });
        open_index.remove(xc, &position(&xc_state));
        for id in new_open {
            let v = tree.get(id);
            open.insert(OpenKey { cost: v.cost, id });
            open_index.insert(id, position(&v.x));
        }
        if s.check_every_iteration {
            check_iteration(q, &tree, &unvisited, &is_unvisited, positions.len(), &mut violations);
        }
        match open.first() {
            Some(k) => xc = k.id,
            None => break Outcome::Failure,
        }
    };

    let wall_time_s = started.elapsed().as_secs_f64();
    let (cost, solution, events) = match outcome {
        Outcome::Success => {
            let c = tree.get(xc).cost;
            (
                Some(c),
                Some(tree.extract_solution(xc)),
                vec![Event {
                    wall_time_s,
                    best_cost: c,
                }],
            )
        }
        Outcome::Failure => (None, None, Vec::new()),
    };
    Ok(PlanResult {
        planner: if full { PlannerKind::FmtFull } else { PlannerKind::FmtPff },
        outcome,
        cost,
        solution,
        tree,
        expansion_costs,
        events,
        wall_time_s,
        stats,
        violations,
        unvisited: unvisited.len(),
    })
}

fn check_iteration(
    q: &PlanQuery<'_>,
    tree: &Tree,
    unvisited: &GridIndex,
    is_unvisited: &[bool],
    n_targets: usize,
    violations: &mut Vec<String>,
) {
    // samples plus goal plus the start
    if unvisited.len() + tree.len() != n_targets + 1 {
        violations.push(format!(
            "sample conservation: {} unvisited + {} vertices != {}",
            unvisited.len(),
            tree.len(),
            n_targets + 1
        ));
    }
    if let Err(e) = tree.check_consistency(&q.problem.env, q.backend.tolerance(), false) {
        violations.push(e);
    }
    for v in &tree.vertices {
        if let Some(i) = v.sample {
            if is_unvisited[i] {
                violations.push(format!("vertex {} still listed as unvisited", v.id));
            }
        }
    }
}
