//! Discretized 2D environment: a 4-connected grid graph with mutable edge
//! costs, Dijkstra routing and the area/subarea decomposition used to
//! schedule meetings.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::sync::Arc;

use thiserror::Error;

use crate::gp::Point;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("grid dimensions must be positive (got {width}x{height})")]
    EmptyGrid { width: usize, height: usize },
    #[error("edge cost must be positive and finite (got {0})")]
    InvalidCost(f64),
    #[error("cannot split {available} columns/rows into {requested} bands")]
    InvalidPartition { requested: usize, available: usize },
    #[error("location id {0} is out of range")]
    UnknownLocation(usize),
    #[error("location {target} is unreachable from {from}")]
    Unreachable { from: usize, target: usize },
    #[error("inflation factor must exceed 1 (got {0})")]
    InvalidInflation(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Edge {
    to: usize,
    cost: f64,
}

/// A route through the grid. `cost` is the sum of edge costs when it was planned.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub nodes: Vec<usize>,
    pub cost: f64,
}

impl Path {
    pub fn trivial(node: usize) -> Self {
        Self {
            nodes: vec![node],
            cost: 0.0,
        }
    }

    /// Joins `self` (ending at `q`) with `next` (starting at `q`).
    pub fn concat(mut self, next: &Path) -> Self {
        debug_assert_eq!(self.nodes.last(), next.nodes.first());
        self.nodes.extend_from_slice(&next.nodes[1..]);
        self.cost += next.cost;
        self
    }
}

/// Rectangular grid with ids `y * width + x`.
#[derive(Debug, Clone)]
pub struct GridWorld {
    width: usize,
    height: usize,
    locations: Arc<[Point]>,
    adjacency: Vec<Vec<Edge>>,
    pub starts: Vec<usize>,
    pub goals: Vec<usize>,
    areas: Vec<Vec<usize>>,
    subareas: Vec<Vec<Vec<usize>>>,
}

#[derive(Copy, Clone, PartialEq)]
struct Frontier {
    cost: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (cost, node)
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl GridWorld {
    /// A `width × height` grid, 4-connected in both directions, every edge
    /// costing `base_cost`. The whole grid starts as a single area and subarea.
    pub fn new(width: usize, height: usize, base_cost: f64) -> Result<Self, WorldError> {
        if width == 0 || height == 0 {
            return Err(WorldError::EmptyGrid { width, height });
        }
        if !(base_cost > 0.0 && base_cost.is_finite()) {
            return Err(WorldError::InvalidCost(base_cost));
        }
        let n = width * height;
        let locations: Arc<[Point]> = (0..n)
            .map(|id| [(id % width) as f64, (id / width) as f64])
            .collect();
        let mut adjacency = vec![Vec::with_capacity(4); n];
        for id in 0..n {
            let (x, y) = (id % width, id / width);
            let mut push = |to: usize| adjacency[id].push(Edge { to, cost: base_cost });
            if y > 0 {
                push(id - width);
            }
            if x > 0 {
                push(id - 1);
            }
            if x + 1 < width {
                push(id + 1);
            }
            if y + 1 < height {
                push(id + width);
            }
        }
        let all: Vec<usize> = (0..n).collect();
        Ok(Self {
            width,
            height,
            locations,
            adjacency,
            starts: Vec::new(),
            goals: Vec::new(),
            areas: vec![all.clone()],
            subareas: vec![vec![all]],
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn locations(&self) -> &Arc<[Point]> {
        &self.locations
    }

    pub fn id(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn coords(&self, id: usize) -> (usize, usize) {
        (id % self.width, id / self.width)
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    pub fn neighbors(&self, id: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[id].iter().map(|e| e.to)
    }

    pub fn edge_cost(&self, from: usize, to: usize) -> Option<f64> {
        self.adjacency
            .get(from)?
            .iter()
            .find(|e| e.to == to)
            .map(|e| e.cost)
    }

    /// Drops the directed edge `from → to`. Only used to build degenerate
    /// graphs in tests and experiments.
    pub fn remove_edge(&mut self, from: usize, to: usize) {
        if let Some(edges) = self.adjacency.get_mut(from) {
            edges.retain(|e| e.to != to);
        }
    }

    pub fn areas(&self) -> &[Vec<usize>] {
        &self.areas
    }

    pub fn subareas(&self) -> &[Vec<Vec<usize>>] {
        &self.subareas
    }

    fn check(&self, id: usize) -> Result<(), WorldError> {
        if id < self.len() {
            Ok(())
        } else {
            Err(WorldError::UnknownLocation(id))
        }
    }

    /// Splits the grid into `m` vertical bands (the direction of travel is
    /// left to right) and each band into `f` horizontal sub-bands. Band sizes
    /// differ by at most one; leading bands take the extra columns/rows.
    pub fn partition(&mut self, m: usize, f: usize) -> Result<(), WorldError> {
        if m == 0 || m > self.width {
            return Err(WorldError::InvalidPartition {
                requested: m,
                available: self.width,
            });
        }
        if f == 0 || f > self.height {
            return Err(WorldError::InvalidPartition {
                requested: f,
                available: self.height,
            });
        }
        let cols = band_bounds(self.width, m);
        let rows = band_bounds(self.height, f);
        self.areas.clear();
        self.subareas.clear();
        for &(x0, x1) in &cols {
            let mut area = Vec::new();
            let mut subs = Vec::with_capacity(f);
            for &(y0, y1) in &rows {
                let mut sub = Vec::with_capacity((x1 - x0) * (y1 - y0));
                for y in y0..y1 {
                    for x in x0..x1 {
                        sub.push(self.id(x, y));
                    }
                }
                area.extend_from_slice(&sub);
                subs.push(sub);
            }
            area.sort_unstable();
            self.areas.push(area);
            self.subareas.push(subs);
        }
        Ok(())
    }

    fn grid_neighbors(&self, id: usize) -> impl Iterator<Item = usize> {
        let (x, y) = self.coords(id);
        let (w, h) = (self.width, self.height);
        [
            (y > 0).then(|| id - w),
            (x > 0).then(|| id - 1),
            (x + 1 < w).then(|| id + 1),
            (y + 1 < h).then(|| id + w),
        ]
        .into_iter()
        .flatten()
    }

    /// Single-source costs over edges (`reverse = false`) or over reversed
    /// edges (`reverse = true`, i.e. costs *to* `source`).
    fn dijkstra(&self, source: usize, reverse: bool) -> (Vec<f64>, Vec<usize>) {
        let n = self.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![usize::MAX; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Frontier {
            cost: 0.0,
            node: source,
        });
        while let Some(Frontier { cost, node }) = heap.pop() {
            if done[node] {
                continue;
            }
            done[node] = true;
            // removed edges make the graph asymmetric, so the reverse pass
            // looks for in-edges among the grid neighbors
            let steps: Vec<(usize, f64)> = if reverse {
                self.grid_neighbors(node)
                    .filter_map(|from| self.edge_cost(from, node).map(|c| (from, c)))
                    .collect()
            } else {
                self.adjacency[node].iter().map(|e| (e.to, e.cost)).collect()
            };
            for (next, step) in steps {
                let cand = cost + step;
                if cand < dist[next] || (cand == dist[next] && node < pred[next] && !done[next]) {
                    dist[next] = cand;
                    pred[next] = node;
                    heap.push(Frontier {
                        cost: cand,
                        node: next,
                    });
                }
            }
        }
        (dist, pred)
    }

    /// Path costs from `source` to every location.
    pub fn costs_from(&self, source: usize) -> Result<Vec<f64>, WorldError> {
        self.check(source)?;
        Ok(self.dijkstra(source, false).0)
    }

    /// Path costs from every location to `target`.
    pub fn costs_to(&self, target: usize) -> Result<Vec<f64>, WorldError> {
        self.check(target)?;
        Ok(self.dijkstra(target, true).0)
    }

    /// Minimum-cost path under the current edge costs. Among equal-cost
    /// predecessors the smallest node id wins.
    pub fn shortest_path(&self, source: usize, target: usize) -> Result<Path, WorldError> {
        self.check(source)?;
        self.check(target)?;
        if source == target {
            return Ok(Path::trivial(source));
        }
        let (dist, pred) = self.dijkstra(source, false);
        if !dist[target].is_finite() {
            return Err(WorldError::Unreachable { from: source, target });
        }
        let mut nodes = vec![target];
        let mut at = target;
        while at != source {
            at = pred[at];
            nodes.push(at);
        }
        nodes.reverse();
        Ok(Path {
            nodes,
            cost: dist[target],
        })
    }

    /// Current cost of walking `nodes`, or `None` if two consecutive nodes
    /// are not joined by an edge.
    pub fn path_cost(&self, nodes: &[usize]) -> Option<f64> {
        nodes
            .windows(2)
            .map(|w| self.edge_cost(w[0], w[1]))
            .sum()
    }

    /// Multiplies the cost of every edge on `path`, in both directions, by
    /// `alpha`. An edge walked several times is inflated once.
    pub fn inflate_traversed(&mut self, path: &Path, alpha: f64) -> Result<(), WorldError> {
        if !(alpha > 1.0 && alpha.is_finite()) {
            return Err(WorldError::InvalidInflation(alpha));
        }
        let mut seen = HashSet::new();
        for w in path.nodes.windows(2) {
            let key = (w[0].min(w[1]), w[0].max(w[1]));
            if w[0] == w[1] || !seen.insert(key) {
                continue;
            }
            for (a, b) in [(key.0, key.1), (key.1, key.0)] {
                if let Some(edge) = self.adjacency[a].iter_mut().find(|e| e.to == b) {
                    edge.cost *= alpha;
                }
            }
        }
        Ok(())
    }
}

/// `[start, end)` bounds of `parts` near-equal bands over `len` cells.
fn band_bounds(len: usize, parts: usize) -> Vec<(usize, usize)> {
    let base = len / parts;
    let extra = len % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for i in 0..parts {
        let size = base + usize::from(i < extra);
        out.push((start, start + size));
        start += size;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(GridWorld::new(25, 25, 1.0).unwrap().len(), 625);
        let one = GridWorld::new(1, 1, 1.0).unwrap();
        assert_eq!((one.len(), one.edge_count()), (1, 0));
        assert_eq!(GridWorld::new(3, 3, 1.0).unwrap().edge_count(), 24);
        assert!(GridWorld::new(0, 3, 1.0).is_err());
        assert!(GridWorld::new(3, 3, 0.0).is_err());
    }

    #[test]
    fn partition_25_by_3_and_10() {
        let mut w = GridWorld::new(25, 25, 1.0).unwrap();
        w.partition(3, 10).unwrap();
        let widths: Vec<usize> = w.areas().iter().map(|a| a.len() / 25).collect();
        assert_eq!(widths, vec![9, 8, 8]);
        assert!(w.subareas().iter().all(|s| s.len() == 10));
        let mut seen = vec![0usize; w.len()];
        for subs in w.subareas() {
            for sub in subs {
                for &id in sub {
                    seen[id] += 1;
                }
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        for (area, subs) in w.areas().iter().zip(w.subareas()) {
            assert_eq!(subs.iter().map(Vec::len).sum::<usize>(), area.len());
        }
    }

    #[test]
    fn trivial_partition() {
        let mut w = GridWorld::new(4, 3, 1.0).unwrap();
        w.partition(1, 1).unwrap();
        assert_eq!(w.areas()[0], (0..12).collect::<Vec<_>>());
        assert_eq!(w.subareas()[0][0].len(), 12);
        assert!(w.partition(5, 1).is_err());
    }

    #[test]
    fn corner_to_corner() {
        let w = GridWorld::new(3, 3, 1.5).unwrap();
        let p = w.shortest_path(0, 8).unwrap();
        assert_eq!(p.cost, 6.0);
        assert_eq!(p.nodes.len(), 5);
        assert_eq!(w.shortest_path(4, 4).unwrap(), Path::trivial(4));
    }

    #[test]
    fn unreachable_is_reported() {
        let mut w = GridWorld::new(2, 1, 1.0).unwrap();
        w.remove_edge(0, 1);
        assert_eq!(
            w.shortest_path(0, 1).unwrap_err(),
            WorldError::Unreachable { from: 0, target: 1 }
        );
    }

    #[test]
    fn inflation_touches_only_path_edges() {
        let mut w = GridWorld::new(3, 3, 1.0).unwrap();
        let path = Path { nodes: vec![0, 1, 2], cost: 2.0 };
        w.inflate_traversed(&path, 2.0).unwrap();
        assert_eq!(w.edge_cost(0, 1), Some(2.0));
        assert_eq!(w.edge_cost(1, 0), Some(2.0));
        assert_eq!(w.edge_cost(2, 1), Some(2.0));
        assert_eq!(w.edge_cost(0, 3), Some(1.0));
        w.inflate_traversed(&path, 2.0).unwrap();
        assert_eq!(w.edge_cost(1, 2), Some(4.0));
        let before = w.clone();
        w.inflate_traversed(&Path::trivial(4), 2.0).unwrap();
        assert_eq!(before.adjacency, w.adjacency);
        assert!(w.inflate_traversed(&path, 1.0).is_err());
    }

    #[test]
    fn reverse_costs_match_forward() {
        let mut w = GridWorld::new(4, 4, 1.0).unwrap();
        let p = w.shortest_path(0, 15).unwrap();
        w.inflate_traversed(&p, 3.0).unwrap();
        let to = w.costs_to(5).unwrap();
        for s in 0..16 {
            assert_eq!(to[s], w.shortest_path(s, 5).unwrap().cost);
        }
    }
}
