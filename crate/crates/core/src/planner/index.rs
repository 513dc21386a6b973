use std::collections::HashMap;

use crate::dynamics::PartialState;

type Cell = (i64, i64);

/// Uniform-grid index over points in the plane, keyed by caller ids.
#[derive(Clone, Debug)]
pub struct GridIndex {
    cell: f64,
    cells: HashMap<Cell, Vec<(usize, PartialState)>>,
    len: usize,
    // occupied cell range, bounds wide queries
    lo: Cell,
    hi: Cell,
}

impl GridIndex {
    pub fn new(cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
        Self {
            cell,
            cells: HashMap::new(),
            len: 0,
            lo: (i64::MAX, i64::MAX),
            hi: (i64::MIN, i64::MIN),
        }
    }

    fn key(&self, p: &PartialState) -> Cell {
        ((p.x / self.cell).floor() as i64, (p.y / self.cell).floor() as i64)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn insert(&mut self, id: usize, p: PartialState) {
        let k = self.key(&p);
        self.lo = (self.lo.0.min(k.0), self.lo.1.min(k.1));
        self.hi = (self.hi.0.max(k.0), self.hi.1.max(k.1));
        self.cells.entry(k).or_default().push((id, p));
        self.len += 1;
    }

    /// Removes `id` stored at `p`; returns whether it was present.
    pub fn remove(&mut self, id: usize, p: &PartialState) -> bool {
        let k = self.key(p);
        let Some(bucket) = self.cells.get_mut(&k) else {
            return false;
        };
        let Some(i) = bucket.iter().position(|(j, _)| *j == id) else {
            return false;
        };
        bucket.swap_remove(i);
        if bucket.is_empty() {
            self.cells.remove(&k);
        }
        self.len -= 1;
        true
    }

    /// Ids of all points with `‖q − p‖ ≤ r`, sorted ascending.
    pub fn within(&self, p: &PartialState, r: f64) -> Vec<usize> {
        let mut out: Vec<usize> = self.collect(p, r).into_iter().map(|(id, _)| id).collect();
        out.sort_unstable();
        out
    }

    fn collect(&self, p: &PartialState, r: f64) -> Vec<(usize, PartialState)> {
        let mut out = Vec::new();
        if self.len == 0 || !(r >= 0.0) {
            return out;
        }
        let span = (r / self.cell).ceil().min(1e12) as i64;
        let c = self.key(p);
        let x0 = c.0.saturating_sub(span).max(self.lo.0);
        let x1 = c.0.saturating_add(span).min(self.hi.0);
        let y0 = c.1.saturating_sub(span).max(self.lo.1);
        let y1 = c.1.saturating_add(span).min(self.hi.1);
        let mut visit = |bucket: &Vec<(usize, PartialState)>| {
            out.extend(bucket.iter().filter(|(_, q)| (q - p).norm() <= r).copied());
        };
        if x0 > x1 || y0 > y1 {
            return Vec::new();
        }
        if ((x1 - x0 + 1) as f64) * ((y1 - y0 + 1) as f64) > self.cells.len() as f64 {
            self.cells.values().for_each(visit);
        } else {
            for x in x0..=x1 {
                for y in y0..=y1 {
                    if let Some(bucket) = self.cells.get(&(x, y)) {
                        visit(bucket);
                    }
                }
            }
        }
        out
    }

    /// Nearest stored point, ties to the lowest id.
    pub fn nearest(&self, p: &PartialState) -> Option<usize> {
        if self.len == 0 {
            return None;
        }
        let mut r = self.cell;
        loop {
            // the radius query is exact, so its closest hit is the global one
            let best = self
                .collect(p, r)
                .into_iter()
                .map(|(id, q)| ((q - p).norm(), id))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if let Some((_, id)) = best {
                return Some(id);
            }
            r *= 2.0;
        }
    }
}

/// O(n) reference for [`GridIndex::within`].
pub fn brute_force_within(points: &[(usize, PartialState)], p: &PartialState, r: f64) -> Vec<usize> {
    let mut out: Vec<usize> = points
        .iter()
        .filter(|(_, q)| (q - p).norm() <= r)
        .map(|(id, _)| *id)
        .collect();
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matches_brute_force(
            pts in proptest::collection::vec((-5.0..25.0f64, -5.0..25.0f64), 0..80),
            removals in proptest::collection::vec(0usize..80, 0..20),
            qx in -5.0..25.0f64, qy in -5.0..25.0f64,
            r in 0.0..12.0f64,
            cell in 0.3..4.0f64,
        ) {
            let mut idx = GridIndex::new(cell);
            let mut pts: Vec<(usize, PartialState)> =
                pts.iter().enumerate().map(|(i, p)| (i, PartialState::new(p.0, p.1))).collect();
            for (i, p) in &pts {
                idx.insert(*i, *p);
            }
            for k in removals {
                if let Some(pos) = pts.iter().position(|(i, _)| *i == k) {
                    let (i, p) = pts.remove(pos);
                    prop_assert!(idx.remove(i, &p));
                }
            }
            prop_assert_eq!(idx.len(), pts.len());
            let q = PartialState::new(qx, qy);
            prop_assert_eq!(idx.within(&q, r), brute_force_within(&pts, &q, r));
            let nearest = idx.nearest(&q);
            let oracle = pts
                .iter()
                .map(|(i, p)| ((p - q).norm(), *i))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .map(|(_, i)| i);
            prop_assert_eq!(nearest, oracle);
        }
    }

    #[test]
    fn radius_extremes() {
        let mut idx = GridIndex::new(1.0);
        for i in 0..50 {
            idx.insert(i, PartialState::new(i as f64 * 0.37 % 10.0, i as f64 * 0.73 % 10.0));
        }
        assert!(idx.within(&PartialState::new(5.05, 5.05), 0.0).is_empty());
        assert_eq!(idx.within(&PartialState::new(5.0, 5.0), 100.0), (0..50).collect::<Vec<_>>());
        assert!(!idx.remove(99, &PartialState::new(0.0, 0.0)));
    }
}
