use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Event, Outcome, PlanQuery, PlanResult, PlanStats, PlannerKind, PlannerSettings};
use crate::dynamics::{fmt_f64, parse_finite, SystemKind};
use crate::error::{Error, Result};

pub const PLAN_FORMAT_VERSION: u32 = 1;

/// Summary of one planning run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanManifest {
    pub format_version: u32,
    pub planner: PlannerKind,
    pub system: SystemKind,
    pub backend: String,
    pub settings: PlannerSettings,
    pub start: [f64; 4],
    pub goal: [f64; 2],
    pub outcome: Outcome,
    pub cost: Option<f64>,
    pub tree_vertices: usize,
    pub unvisited_samples: usize,
    pub stats: PlanStats,
    pub wall_time_s: f64,
}

impl PlanManifest {
    pub fn new(q: &PlanQuery<'_>, r: &PlanResult) -> Self {
        let x = q.problem.start;
        Self {
            format_version: PLAN_FORMAT_VERSION,
            planner: r.planner,
            system: q.backend.system().kind,
            backend: q.backend.name().to_string(),
            settings: q.settings.clone(),
            start: [x[0], x[1], x[2], x[3]],
            goal: [q.problem.goal.x, q.problem.goal.y],
            outcome: r.outcome,
            cost: r.cost,
            tree_vertices: r.tree.len(),
            unvisited_samples: r.unvisited,
            stats: r.stats.clone(),
            wall_time_s: r.wall_time_s,
        }
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(input: R) -> Result<Self> {
        let m: Self = serde_json::from_reader(input)?;
        if m.format_version != PLAN_FORMAT_VERSION {
            return Err(Error::Parse("unsupported plan manifest version".into()));
        }
        Ok(m)
    }
}

/// `wall_time_s,best_cost`
pub fn write_events_csv<W: Write>(events: &[Event], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["wall_time_s", "best_cost"])?;
    for e in events {
        w.write_record([fmt_f64(e.wall_time_s), fmt_f64(e.best_cost)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_events_csv<R: Read>(input: R) -> Result<Vec<Event>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().map(str::trim).ne(["wall_time_s", "best_cost"]) {
        return Err(Error::Parse("event log header must be wall_time_s,best_cost".into()));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::Parse("event rows need two fields".into()));
        }
        out.push(Event {
            wall_time_s: parse_finite(&rec[0])?,
            best_cost: parse_finite(&rec[1])?,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeVertexRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub cost: f64,
    pub x: [f64; 4],
}

/// Tree snapshot for rendering: vertices and subsampled edge polylines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeFile {
    pub vertices: Vec<TreeVertexRecord>,
    pub edges: Vec<Vec<[f64; 2]>>,
}

impl TreeFile {
    pub fn from_tree(tree: &super::Tree) -> Self {
        Self {
            vertices: tree
                .vertices
                .iter()
                .map(|v| TreeVertexRecord {
                    id: v.id,
                    parent: v.parent,
                    cost: v.cost,
                    x: [v.x[0], v.x[1], v.x[2], v.x[3]],
                })
                .collect(),
            edges: tree.edge_polylines(12),
        }
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(out, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(input: R) -> Result<Self> {
        Ok(serde_json::from_reader(input)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn events_round_trip() {
        let ev = vec![
            Event { wall_time_s: 0.5, best_cost: 12.25 },
            Event { wall_time_s: 1.0, best_cost: 11.0 },
        ];
        let mut buf = Vec::new();
        write_events_csv(&ev, &mut buf).unwrap();
        assert!(buf.starts_with(b"wall_time_s,best_cost\n"));
        assert_eq!(read_events_csv(buf.as_slice()).unwrap(), ev);
        assert!(read_events_csv("t,c\n1,2\n".as_bytes()).is_err());
        assert!(read_events_csv("wall_time_s,best_cost\n1,inf\n".as_bytes()).is_err());
        assert!(read_events_csv("wall_time_s,best_cost\n1\n".as_bytes()).is_err());
    }
}
