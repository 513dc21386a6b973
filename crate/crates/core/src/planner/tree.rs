use serde::{Deserialize, Serialize};

use crate::dynamics::{position, PartialState, StateVec, Trajectory};
use crate::environment::Env;

/// Tolerance of the cost recursion `child = parent + edge`.
pub const COST_TOL: f64 = 1e-6;

/// Largest gap allowed where an edge meets a vertex state (exact steering
/// residual).
pub const JOIN_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: usize,
    /// State actually reached; never re-targeted once created.
    pub x: StateVec,
    /// Partial state this vertex was created for.
    pub xbar: PartialState,
    pub parent: Option<usize>,
    pub cost: f64,
    /// Edge from the parent (stationary at `x` for the root).
    pub edge: Trajectory,
    /// Index of the sample this vertex consumed, if any.
    pub sample: Option<usize>,
    pub children: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub vertices: Vec<Vertex>,
}

impl Tree {
    pub fn with_root(x: StateVec) -> Self {
        Self {
            vertices: vec![Vertex {
                id: 0,
                x,
                xbar: position(&x),
                parent: None,
                cost: 0.0,
                edge: Trajectory::stationary(x),
                sample: None,
                children: Vec::new(),
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn get(&self, id: usize) -> &Vertex {
        &self.vertices[id]
    }

    /// Adds a child of `parent` reached through `edge`; returns its id.
    pub fn add(&mut self, parent: usize, xbar: PartialState, edge: Trajectory, sample: Option<usize>) -> usize {
        let id = self.vertices.len();
        let cost = self.vertices[parent].cost + edge.cost;
        self.vertices.push(Vertex {
            id,
            x: *edge.final_state(),
            xbar,
            parent: Some(parent),
            cost,
            edge,
            sample,
            children: Vec::new(),
        });
        self.vertices[parent].children.push(id);
        id
    }

    /// Whether `a` lies on the root path of `b` (or equals it).
    pub fn is_ancestor(&self, a: usize, mut b: usize) -> bool {
        loop {
            if a == b {
                return true;
            }
            match self.vertices[b].parent {
                Some(p) => b = p,
                None => return false,
            }
        }
    }

    /// Moves `id` under `new_parent` with `edge`, which must end at the
    /// vertex's fixed state (within [`JOIN_TOL`]), and propagates the cost
    /// change to all descendants.
    pub fn reparent(&mut self, id: usize, new_parent: usize, edge: Trajectory) {
        debug_assert!(!self.is_ancestor(id, new_parent), "reparenting would create a cycle");
        if let Some(old) = self.vertices[id].parent {
            self.vertices[old].children.retain(|c| *c != id);
        }
        self.vertices[new_parent].children.push(id);
        let new_cost = self.vertices[new_parent].cost + edge.cost;
        let v = &mut self.vertices[id];
        let delta = new_cost - v.cost;
        v.parent = Some(new_parent);
        v.edge = edge;
        v.cost = new_cost;
        let mut stack = v.children.clone();
        while let Some(c) = stack.pop() {
            self.vertices[c].cost += delta;
            stack.extend(self.vertices[c].children.iter().copied());
        }
    }

    /// Vertex ids from the root to `id`.
    pub fn path(&self, mut id: usize) -> Vec<usize> {
        let mut out = vec![id];
        while let Some(p) = self.vertices[id].parent {
            out.push(p);
            id = p;
        }
        out.reverse();
        out
    }

    /// Edge concatenation from the root to `id`.
    pub fn extract_solution(&self, id: usize) -> Trajectory {
        let path = self.path(id);
        let mut traj = Trajectory::stationary(self.vertices[path[0]].x);
        for v in &path[1..] {
            traj.append(&self.vertices[*v].edge);
        }
        traj
    }

    /// Recomputes every cost from the root along child links; unreachable
    /// vertices get NaN and multiply-linked ones infinity.
    pub fn recomputed_costs(&self) -> Vec<f64> {
        let mut cost = vec![f64::NAN; self.len()];
        let mut stack = vec![0];
        cost[0] = 0.0;
        while let Some(v) = stack.pop() {
            for &c in &self.vertices[v].children {
                // a child listed twice means a cycle or a duplicate link
                if c == 0 || !cost[c].is_nan() {
                    cost[c] = f64::INFINITY;
                    continue;
                }
                cost[c] = cost[v] + self.vertices[c].edge.cost;
                stack.push(c);
            }
        }
        cost
    }

    /// Structural and geometric consistency; returns the first violation.
    /// `endpoint_tol` bounds the distance between an edge's final position
    /// and the vertex's target partial state.
    pub fn check_consistency(&self, env: &Env, endpoint_tol: f64, check_edges: bool) -> Result<(), String> {
        let root = self.vertices.first().ok_or("empty tree")?;
        if root.parent.is_some() || root.cost != 0.0 {
            return Err("root must have no parent and zero cost".into());
        }
        let recomputed = self.recomputed_costs();
        for v in &self.vertices {
            if v.id >= self.len() || self.vertices[v.id].id != v.id {
                return Err(format!("vertex id {} out of place", v.id));
            }
            if recomputed[v.id].is_nan() {
                return Err(format!("vertex {} unreachable from the root", v.id));
            }
            if recomputed[v.id].is_infinite() {
                return Err(format!("vertex {} linked more than once", v.id));
            }
            if (recomputed[v.id] - v.cost).abs() > COST_TOL * (1.0 + v.cost) {
                return Err(format!("vertex {} cost {} but edges sum to {}", v.id, v.cost, recomputed[v.id]));
            }
            let Some(p) = v.parent else {
                if v.id != 0 {
                    return Err(format!("non-root vertex {} without parent", v.id));
                }
                continue;
            };
            if !self.vertices[p].children.contains(&v.id) {
                return Err(format!("vertex {} missing from its parent's children", v.id));
            }
            let pv = &self.vertices[p];
            if (v.edge.start_state() - pv.x).norm() > 1e-9 {
                return Err(format!("edge into {} does not start at its parent", v.id));
            }
            if (v.edge.final_state() - v.x).norm() > JOIN_TOL {
                return Err(format!("edge into {} does not end at its state", v.id));
            }
            if (position(&v.x) - v.xbar).norm() > endpoint_tol {
                return Err(format!("vertex {} is {} from its target", v.id, (position(&v.x) - v.xbar).norm()));
            }
            if check_edges && !env.trajectory_free(&v.edge) {
                return Err(format!("edge into {} collides", v.id));
            }
        }
        // every vertex reached exactly once from the root, each consistent
        // with its parent link: the structure is a tree
        Ok(())
    }

    /// Positions along every edge, for rendering.
    pub fn edge_polylines(&self, max_points: usize) -> Vec<Vec<[f64; 2]>> {
        self.vertices
            .iter()
            .filter(|v| v.parent.is_some())
            .map(|v| {
                let n = v.edge.states.len();
                let stride = n.div_ceil(max_points.max(2)).max(1);
                let mut pts: Vec<[f64; 2]> = v.edge.states.iter().step_by(stride).map(|s| [s[0], s[1]]).collect();
                let last = v.edge.final_state();
                if (n - 1) % stride != 0 {
                    pts.push([last[0], last[1]]);
                }
                pts
            })
            .collect()
    }
}
