//! Planner sweeps and cost-versus-time aggregation.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dynamics::{fmt_f64, parse_finite};
use crate::environment::Problem;
use crate::error::{contract, Error, Result};
use crate::planner::{is_monotone, plan, Event, Outcome, PlanQuery, PlannerKind, PlannerSettings};
use crate::steering::SteeringBackend;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub planners: Vec<PlannerKind>,
    pub samples: Vec<usize>,
    pub seeds: Vec<u64>,
    pub radius: f64,
    pub goal_tolerance: f64,
    /// Number of log-spaced wall-time buckets.
    pub buckets: usize,
    /// Check tree consistency and ordered-search monotonicity after each run.
    pub check_invariants: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            planners: PlannerKind::ALL.to_vec(),
            samples: vec![500, 1000, 2000],
            seeds: (0..10).collect(),
            radius: 1.5,
            goal_tolerance: 0.3,
            buckets: 16,
            check_invariants: true,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.planners.is_empty() || self.samples.is_empty() || self.seeds.is_empty() {
            return Err(contract("benchmark needs at least one planner, sample count and seed"));
        }
        if self.samples.contains(&0) {
            return Err(contract("sample counts must be positive"));
        }
        if self.buckets < 2 {
            return Err(contract("at least two time buckets are needed"));
        }
        Ok(())
    }
}

/// One planner run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub planner: PlannerKind,
    pub samples: usize,
    pub seed: u64,
    pub outcome: Outcome,
    pub cost: Option<f64>,
    pub wall_time_s: f64,
    pub vertices: usize,
    pub events: Vec<Event>,
    /// Empty when the run passed its invariant checks (or none were run).
    pub violations: Vec<String>,
}

/// Runs every planner, sample count and seed in sequence, so wall times are
/// not distorted by concurrent runs.
pub fn run_benchmark(problem: &Problem, backend: &SteeringBackend, cfg: &BenchmarkConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for &planner in &cfg.planners {
        for &m in &cfg.samples {
            for &seed in &cfg.seeds {
                let settings = PlannerSettings {
                    samples: m,
                    radius: cfg.radius,
                    goal_tolerance: cfg.goal_tolerance,
                    seed,
                    ..Default::default()
                };
                let q = PlanQuery {
                    problem,
                    backend,
                    settings: &settings,
                };
                let r = plan(planner, &q)?;
                let mut violations = Vec::new();
                if cfg.check_invariants {
                    if let Err(e) = r.tree.check_consistency(&problem.env, backend.tolerance(), true) {
                        violations.push(e);
                    }
                    if !is_monotone(&r.expansion_costs) {
                        violations.push("expansion costs decreased".into());
                    }
                    if let Some(sol) = &r.solution {
                        if !problem.env.trajectory_free(sol) {
                            violations.push("solution collides".into());
                        }
                    }
                }
                out.push(RunRecord {
                    planner,
                    samples: m,
                    seed,
                    outcome: r.outcome,
                    cost: r.cost,
                    wall_time_s: r.wall_time_s,
                    vertices: r.tree.len(),
                    events: r.events,
                    violations,
                });
            }
        }
    }
    Ok(out)
}

/// Log-spaced bucket ends from the first logged solution to the end of the
/// longest run.
pub fn bucket_edges(records: &[RunRecord], n: usize) -> Vec<f64> {
    let positive = |t: &f64| *t > 0.0;
    let first = records
        .iter()
        .flat_map(|r| r.events.iter().map(|e| e.wall_time_s))
        .filter(positive)
        .fold(f64::INFINITY, f64::min);
    let last = records.iter().map(|r| r.wall_time_s).filter(positive).fold(0.0, f64::max);
    if !first.is_finite() || n < 2 {
        return vec![last.max(1e-6)];
    }
    let (a, b) = (first.ln(), last.max(first).ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Best cost a seed had found by time `t` over all of its runs.
pub fn best_so_far(events: &[(u64, Event)], seed: u64, t: f64) -> f64 {
    events
        .iter()
        .filter(|(s, e)| *s == seed && e.wall_time_s <= t)
        .map(|(_, e)| e.best_cost)
        .fold(f64::INFINITY, f64::min)
}

/// Median treating unsolved entries as +inf.
pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::INFINITY;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        let (a, b) = (values[n / 2 - 1], values[n / 2]);
        if a.is_infinite() || b.is_infinite() {
            b
        } else {
            0.5 * (a + b)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub planner: PlannerKind,
    pub bucket_end_s: f64,
    pub median_cost: f64,
    pub solved_seeds: usize,
    pub seeds: usize,
}

/// Median over seeds of the best-so-far cost at each bucket end, for every
/// listed planner (solved or not).
pub fn summarize(planners: &[PlannerKind], events: &[EventRecord], seeds: &[u64], edges: &[f64]) -> Vec<SummaryRow> {
    let mut by_planner: BTreeMap<PlannerKind, Vec<(u64, Event)>> = planners.iter().map(|k| (*k, Vec::new())).collect();
    for e in events {
        if let Some(v) = by_planner.get_mut(&e.planner) {
            v.push((e.seed, e.event));
        }
    }
    let mut rows = Vec::new();
    for (planner, evs) in &by_planner {
        for &t in edges {
            let mut best: Vec<f64> = seeds.iter().map(|s| best_so_far(evs, *s, t)).collect();
            let solved = best.iter().filter(|c| c.is_finite()).count();
            rows.push(SummaryRow {
                planner: *planner,
                bucket_end_s: t,
                median_cost: median(&mut best),
                solved_seeds: solved,
                seeds: seeds.len(),
            });
        }
    }
    rows
}

/// One logged improvement of one run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventRecord {
    pub planner: PlannerKind,
    pub samples: usize,
    pub seed: u64,
    pub event: Event,
}

pub fn flatten_events(records: &[RunRecord]) -> Vec<EventRecord> {
    records
        .iter()
        .flat_map(|r| {
            r.events.iter().map(move |e| EventRecord {
                planner: r.planner,
                samples: r.samples,
                seed: r.seed,
                event: *e,
            })
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// `planner,samples,seed,outcome,cost,wall_time_s,vertices,invariants_ok`
pub fn write_runs_csv<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["planner", "samples", "seed", "outcome", "cost", "wall_time_s", "vertices", "invariants_ok"])?;
    for r in records {
        let outcome = match r.outcome {
            Outcome::Success => "success",
            Outcome::Failure => "failure",
        };
        w.write_record([
            r.planner.name().to_string(),
            r.samples.to_string(),
            r.seed.to_string(),
            outcome.to_string(),
            opt(r.cost),
            fmt_f64(r.wall_time_s),
            r.vertices.to_string(),
            r.violations.is_empty().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `planner,samples,seed,wall_time_s,best_cost`
pub fn write_events_csv<W: Write>(events: &[EventRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["planner", "samples", "seed", "wall_time_s", "best_cost"])?;
    for e in events {
        w.write_record([
            e.planner.name().to_string(),
            e.samples.to_string(),
            e.seed.to_string(),
            fmt_f64(e.event.wall_time_s),
            fmt_f64(e.event.best_cost),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_events_csv<R: Read>(input: R) -> Result<Vec<EventRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().map(str::trim).ne(["planner", "samples", "seed", "wall_time_s", "best_cost"]) {
        return Err(Error::Parse("benchmark event header mismatch".into()));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 5 {
            return Err(Error::Parse("benchmark event rows need five fields".into()));
        }
        let int = |s: &str| s.trim().parse::<u64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
        out.push(EventRecord {
            planner: rec[0].trim().parse()?,
            samples: int(&rec[1])? as usize,
            seed: int(&rec[2])?,
            event: Event {
                wall_time_s: parse_finite(&rec[3])?,
                best_cost: parse_finite(&rec[4])?,
            },
        });
    }
    Ok(out)
}

/// `planner,bucket_end_s,median_cost,solved_seeds,seeds`; unsolved medians
/// are written as `inf`.
pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["planner", "bucket_end_s", "median_cost", "solved_seeds", "seeds"])?;
    for r in rows {
        let median = if r.median_cost.is_finite() {
            fmt_f64(r.median_cost)
        } else {
            "inf".into()
        };
        w.write_record([
            r.planner.name().to_string(),
            fmt_f64(r.bucket_end_s),
            median,
            r.solved_seeds.to_string(),
            r.seeds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv<R: Read>(input: R) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().map(str::trim).ne(["planner", "bucket_end_s", "median_cost", "solved_seeds", "seeds"]) {
        return Err(Error::Parse("benchmark summary header mismatch".into()));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 5 {
            return Err(Error::Parse("summary rows need five fields".into()));
        }
        let int = |s: &str| s.trim().parse::<usize>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
        let median = match rec[2].trim() {
            "inf" => f64::INFINITY,
            s => parse_finite(s)?,
        };
        out.push(SummaryRow {
            planner: rec[0].trim().parse()?,
            bucket_end_s: parse_finite(&rec[1])?,
            median_cost: median,
            solved_seeds: int(&rec[3])?,
            seeds: int(&rec[4])?,
        });
    }
    Ok(out)
}

/// Fraction of buckets in which `a`'s median is at most `b`'s, counting only
/// buckets where at least one of them (`either = true`) or both
/// (`either = false`) have a finite median. `None` when no bucket counts.
pub fn dominance(rows: &[SummaryRow], a: PlannerKind, b: PlannerKind, either: bool) -> Option<(usize, usize)> {
    let pick = |k: PlannerKind| -> BTreeMap<u64, f64> {
        rows.iter()
            .filter(|r| r.planner == k)
            .map(|r| (r.bucket_end_s.to_bits(), r.median_cost))
            .collect()
    };
    let (ma, mb) = (pick(a), pick(b));
    let mut counted = 0;
    let mut held = 0;
    for (t, ca) in &ma {
        let Some(cb) = mb.get(t) else { continue };
        let include = if either {
            ca.is_finite() || cb.is_finite()
        } else {
            ca.is_finite() && cb.is_finite()
        };
        if include {
            counted += 1;
            if ca <= cb {
                held += 1;
            }
        }
    }
    (counted > 0).then_some((held, counted))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(planner: PlannerKind, seed: u64, t: f64, c: f64) -> EventRecord {
        EventRecord {
            planner,
            samples: 10,
            seed,
            event: Event { wall_time_s: t, best_cost: c },
        }
    }

    #[test]
    fn medians_count_unsolved_as_infinite() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&mut [1.0, f64::INFINITY, f64::INFINITY]), f64::INFINITY);
        assert_eq!(median(&mut [1.0, 2.0, f64::INFINITY, f64::INFINITY]), f64::INFINITY);
        assert_eq!(median(&mut []), f64::INFINITY);
    }

    #[test]
    fn best_so_far_takes_the_minimum_up_to_t() {
        let evs = vec![
            (0, Event { wall_time_s: 1.0, best_cost: 10.0 }),
            (0, Event { wall_time_s: 2.0, best_cost: 8.0 }),
            (0, Event { wall_time_s: 3.0, best_cost: 9.0 }),
            (1, Event { wall_time_s: 0.5, best_cost: 1.0 }),
        ];
        assert_eq!(best_so_far(&evs, 0, 0.9), f64::INFINITY);
        assert_eq!(best_so_far(&evs, 0, 2.5), 8.0);
        assert_eq!(best_so_far(&evs, 0, 3.5), 8.0);
    }

    #[test]
    fn summary_and_dominance() {
        let events = vec![
            ev(PlannerKind::FmtPff, 0, 1.0, 5.0),
            ev(PlannerKind::FmtPff, 1, 1.0, 6.0),
            ev(PlannerKind::FmtPff, 2, 2.0, 4.0),
            ev(PlannerKind::KinoRrtStar, 0, 1.5, 7.0),
            ev(PlannerKind::KinoRrtStar, 1, 1.5, 6.5),
            ev(PlannerKind::KinoRrtStar, 2, 2.5, 3.0),
        ];
        let rows = summarize(&[PlannerKind::FmtPff, PlannerKind::KinoRrtStar], &events, &[0, 1, 2], &[1.0, 2.0, 3.0]);
        assert_eq!(rows.len(), 6);
        let pff: Vec<f64> = rows.iter().filter(|r| r.planner == PlannerKind::FmtPff).map(|r| r.median_cost).collect();
        assert_eq!(pff, vec![6.0, 5.0, 5.0]);
        let rrt: Vec<f64> = rows.iter().filter(|r| r.planner == PlannerKind::KinoRrtStar).map(|r| r.median_cost).collect();
        assert_eq!(rrt, vec![f64::INFINITY, 7.0, 6.5]);
        assert_eq!(dominance(&rows, PlannerKind::FmtPff, PlannerKind::KinoRrtStar, false), Some((2, 2)));
        assert_eq!(dominance(&rows, PlannerKind::FmtPff, PlannerKind::KinoRrtStar, true), Some((3, 3)));
        assert_eq!(dominance(&rows, PlannerKind::KinoRrtStar, PlannerKind::FmtPff, true), Some((0, 3)));
    }

    #[test]
    fn bucket_edges_span_first_solution_to_last_run() {
        let run = |t: f64, events: Vec<Event>| RunRecord {
            planner: PlannerKind::FmtPff,
            samples: 10,
            seed: 0,
            outcome: if events.is_empty() { Outcome::Failure } else { Outcome::Success },
            cost: events.last().map(|e| e.best_cost),
            wall_time_s: t,
            vertices: 1,
            events,
            violations: Vec::new(),
        };
        let records = vec![
            run(0.01, Vec::new()),
            run(0.5, vec![Event { wall_time_s: 0.1, best_cost: 3.0 }]),
            run(10.0, Vec::new()),
        ];
        let e = bucket_edges(&records, 3);
        assert!((e[0] - 0.1).abs() < 1e-12 && (e[1] - 1.0).abs() < 1e-12 && (e[2] - 10.0).abs() < 1e-9);
        assert_eq!(bucket_edges(&records[..1], 3), vec![0.01]);
    }

    #[test]
    fn csv_round_trips() {
        let events = vec![ev(PlannerKind::FmtFull, 3, 0.25, 12.5)];
        let mut buf = Vec::new();
        write_events_csv(&events, &mut buf).unwrap();
        assert_eq!(read_events_csv(buf.as_slice()).unwrap(), events);
        let rows = summarize(&[PlannerKind::FmtFull, PlannerKind::FmtPff], &events, &[3, 4], &[0.1, 1.0]);
        assert_eq!(rows.len(), 4);
        let mut buf = Vec::new();
        write_summary_csv(&rows, &mut buf).unwrap();
        assert_eq!(read_summary_csv(buf.as_slice()).unwrap(), rows);
        assert!(read_summary_csv("a,b\n".as_bytes()).is_err());
        assert!(read_events_csv("planner,samples,seed,wall_time_s,best_cost\nrrt,1,1,1,1\n".as_bytes()).is_err());
    }
}
