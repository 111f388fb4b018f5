//! Shortest paths on the Steiner graph of a triangulated surface, with
//! optional deletion of edges lying inside a null set.
//!
//! At level L every mesh edge carries 2^L − 1 equally spaced Steiner points.
//! Two nodes are adjacent when they lie on the boundary of a common triangle,
//! and the edge weight is their Euclidean distance (the segment stays inside
//! the triangle). Levels are nested, so distances never increase with L.

use super::surface::{dist3, lerp3, PolyhedralSurface, P3};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet, VecDeque};
use std::sync::{Arc, Mutex};

/// Geometric primitives of dimension < 2, with the tolerance band used to
/// decide that a graph edge lies inside them.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    Segment { a: P3, b: P3, thickness: Option<f64> },
    /// Circle of the given radius around `center` in the plane with unit `normal`.
    Circle { center: P3, normal: P3, radius: f64, thickness: Option<f64> },
}

impl Primitive {
    pub fn distance(&self, p: &P3) -> f64 {
        match self {
            Primitive::Segment { a, b, .. } => {
                let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
                let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
                let len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
                let t = if len2 > 0.0 { ((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2).clamp(0.0, 1.0) } else { 0.0 };
                dist3(p, &lerp3(a, b, t))
            }
            Primitive::Circle { center, normal, radius, .. } => {
                let d = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
                let h = d[0] * normal[0] + d[1] * normal[1] + d[2] * normal[2];
                let inplane = [d[0] - h * normal[0], d[1] - h * normal[1], d[2] - h * normal[2]];
                let r = (inplane[0].powi(2) + inplane[1].powi(2) + inplane[2].powi(2)).sqrt();
                (h * h + (r - radius).powi(2)).sqrt()
            }
        }
    }

    /// Unit tangent at the point of the primitive closest to `p`.
    fn tangent(&self, p: &P3) -> P3 {
        match self {
            Primitive::Segment { a, b, .. } => crate::sampling::unit3([b[0] - a[0], b[1] - a[1], b[2] - a[2]]),
            Primitive::Circle { center, normal, .. } => {
                let d = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
                let t = [normal[1] * d[2] - normal[2] * d[1], normal[2] * d[0] - normal[0] * d[2], normal[0] * d[1] - normal[1] * d[0]];
                crate::sampling::unit3(t)
            }
        }
    }

    fn thickness(&self) -> Option<f64> {
        match self {
            Primitive::Segment { thickness, .. } | Primitive::Circle { thickness, .. } => *thickness,
        }
    }
}

/// A union of primitives declared to have zero surface measure.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct NullSet {
    pub primitives: Vec<Primitive>,
}

impl NullSet {
    pub fn new(primitives: Vec<Primitive>) -> Self {
        Self { primitives }
    }

    pub fn segment(a: P3, b: P3) -> Self {
        Self::new(vec![Primitive::Segment { a, b, thickness: None }])
    }

    /// Great circle of the unit sphere orthogonal to `normal`.
    pub fn great_circle(normal: P3) -> Self {
        let n = crate::sampling::unit3(normal);
        Self::new(vec![Primitive::Circle { center: [0.0; 3], normal: n, radius: 1.0, thickness: None }])
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    /// Whether `p` lies strictly within the band of some primitive; `snap`
    /// is the band for primitives without an explicit thickness.
    fn contains(&self, p: &P3, snap: f64) -> bool {
        self.primitives.iter().any(|q| q.distance(p) < q.thickness().unwrap_or(snap))
    }

    /// Whether the segment [u, v] runs inside some primitive: both ends and
    /// the midpoint lie in its band and the segment makes an angle below 45°
    /// with the primitive. Steeper segments count as crossings.
    fn runs_along(&self, u: &P3, v: &P3, snap: f64) -> bool {
        let m = lerp3(u, v, 0.5);
        let len = dist3(u, v);
        self.primitives.iter().any(|q| {
            let band = q.thickness().unwrap_or(snap);
            if !(q.distance(u) < band && q.distance(v) < band && q.distance(&m) < band) {
                return false;
            }
            let t = q.tangent(&m);
            let c = ((v[0] - u[0]) * t[0] + (v[1] - u[1]) * t[1] + (v[2] - u[2]) * t[2]).abs();
            c > std::f64::consts::FRAC_1_SQRT_2 * len
        })
    }
}

#[derive(Clone, Copy, PartialEq)]
struct State {
    cost: f64,
    node: usize,
}

impl Eq for State {}

impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| self.node.cmp(&other.node))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Node-count limit for a single Steiner graph.
pub const DEFAULT_NODE_BUDGET: usize = 20_000_000;

/// The implicit Steiner graph of a surface at a fixed level.
#[derive(Debug, Clone)]
pub struct SteinerGraph {
    surface: Arc<PolyhedralSurface>,
    level: u32,
    /// Steiner points per edge.
    k: usize,
    null_set: NullSet,
    snap: f64,
    /// Nodes strictly inside the null-set band.
    near_null: Vec<bool>,
}

impl SteinerGraph {
    pub fn new(surface: Arc<PolyhedralSurface>, level: u32, null_set: NullSet) -> Result<Self> {
        let k = (1usize << level) - 1;
        let nodes = surface.vertices().len() + surface.edges().len() * k;
        if nodes > DEFAULT_NODE_BUDGET {
            return Err(Error::MemoryBudget { estimated: nodes, limit: DEFAULT_NODE_BUDGET });
        }
        let snap = 0.5 * surface.min_edge_length();
        let mut g = Self { surface, level, k, null_set, snap, near_null: Vec::new() };
        if !g.null_set.is_empty() {
            g.near_null = (0..nodes).map(|n| g.null_set.contains(&g.position(n), snap)).collect();
        }
        Ok(g)
    }

    pub fn surface(&self) -> &PolyhedralSurface {
        &self.surface
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn node_count(&self) -> usize {
        self.surface.vertices().len() + self.surface.edges().len() * self.k
    }

    /// Snap tolerance: half the minimum mesh edge length.
    pub fn snap_tolerance(&self) -> f64 {
        self.snap
    }

    pub fn position(&self, node: usize) -> P3 {
        let nv = self.surface.vertices().len();
        if node < nv {
            return self.surface.vertices()[node];
        }
        let e = (node - nv) / self.k;
        let j = (node - nv) % self.k + 1;
        let [a, b] = self.surface.edges()[e];
        lerp3(&self.surface.vertices()[a], &self.surface.vertices()[b], j as f64 / (self.k + 1) as f64)
    }

    /// Node of edge `e` at parameter index `j ∈ 0..=k+1` (0 and k+1 are the endpoints).
    fn edge_node(&self, e: usize, j: usize) -> usize {
        let [a, b] = self.surface.edges()[e];
        if j == 0 {
            a
        } else if j == self.k + 1 {
            b
        } else {
            self.surface.vertices().len() + e * self.k + j - 1
        }
    }

    fn triangles_of(&self, node: usize) -> &[usize] {
        let nv = self.surface.vertices().len();
        if node < nv {
            &self.surface.vertex_tris()[node]
        } else {
            &self.surface.edge_tris()[(node - nv) / self.k]
        }
    }

    fn deleted(&self, u: usize, v: usize, pu: &P3, pv: &P3) -> bool {
        if self.near_null.is_empty() || !self.near_null[u] || !self.near_null[v] {
            return false;
        }
        self.null_set.runs_along(pu, pv, self.snap)
    }

    /// Nearest node to `p` (linear scan).
    pub fn snap_point(&self, p: &P3) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for n in 0..self.node_count() {
            let d = dist3(&self.position(n), p);
            if d < best.1 {
                best = (n, d);
            }
        }
        best
    }

    /// Dijkstra from `source`; stops early once `target` is settled.
    pub fn shortest_paths(&self, source: usize, target: Option<usize>) -> Vec<f64> {
        let n = self.node_count();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(State { cost: 0.0, node: source });
        while let Some(State { cost, node }) = heap.pop() {
            if done[node] {
                continue;
            }
            done[node] = true;
            if Some(node) == target {
                break;
            }
            let pu = self.position(node);
            for &t in self.triangles_of(node) {
                for &e in &self.surface.tri_edges()[t] {
                    for j in 0..=self.k + 1 {
                        let v = self.edge_node(e, j);
                        if v == node || done[v] {
                            continue;
                        }
                        let pv = self.position(v);
                        if self.deleted(node, v, &pu, &pv) {
                            continue;
                        }
                        let c = cost + dist3(&pu, &pv);
                        if c < dist[v] {
                            dist[v] = c;
                            heap.push(State { cost: c, node: v });
                        }
                    }
                }
            }
        }
        dist
    }

    pub fn distance(&self, source: usize, target: usize) -> f64 {
        self.shortest_paths(source, Some(target))[target]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DistanceResult {
    /// `f64::INFINITY` when the points are disconnected.
    pub value: f64,
    pub level: u32,
    pub reachable: bool,
    pub snapped_p: P3,
    pub snapped_q: P3,
    /// Largest distance moved by snapping.
    pub snap_error: f64,
    pub diagnostic: Option<String>,
}

fn distance_on(graph: &SteinerGraph, p: &P3, q: &P3) -> DistanceResult {
    let (a, ea) = graph.snap_point(p);
    let (b, eb) = graph.snap_point(q);
    let value = graph.distance(a, b);
    let reachable = value.is_finite();
    let diagnostic = if reachable {
        None
    } else if !graph.near_null.is_empty() && (graph.near_null[a] || graph.near_null[b]) {
        Some("endpoint lies in the null set and is isolated by edge deletion".into())
    } else {
        Some("points lie in different components".into())
    };
    DistanceResult {
        value,
        level: graph.level,
        reachable,
        snapped_p: graph.position(a),
        snapped_q: graph.position(b),
        snap_error: ea.max(eb),
        diagnostic,
    }
}

/// Induced length distance on the Steiner graph: an upper bound of the
/// intrinsic distance, non-increasing in `level`.
pub fn graph_distance(surface: &Arc<PolyhedralSurface>, p: &P3, q: &P3, level: u32) -> Result<DistanceResult> {
    let g = SteinerGraph::new(surface.clone(), level, NullSet::default())?;
    Ok(distance_on(&g, p, q))
}

/// Length distance among paths that never run inside `null_set`: graph
/// edges whose endpoints and midpoint all lie in a primitive's band are
/// removed, while transversal crossings through a single node remain.
pub fn essential_distance(surface: &Arc<PolyhedralSurface>, p: &P3, q: &P3, null_set: &NullSet, level: u32) -> Result<DistanceResult> {
    let g = SteinerGraph::new(surface.clone(), level, null_set.clone())?;
    Ok(distance_on(&g, p, q))
}

/// Uniform bucket grid over node positions for fast nearest-node queries.
#[derive(Debug)]
struct NodeIndex {
    lo: P3,
    cell: f64,
    dims: [usize; 3],
    buckets: HashMap<[usize; 3], Vec<usize>>,
}

impl NodeIndex {
    fn build(g: &SteinerGraph) -> Self {
        let n = g.node_count();
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for i in 0..n {
            let p = g.position(i);
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let ext = (0..3).map(|k| hi[k] - lo[k]).fold(0.0, f64::max).max(1e-12);
        // about 4 nodes per bucket for a surface
        let cell = (ext * ext * 4.0 / n as f64).sqrt().max(ext / 4096.0);
        let dims = [0, 1, 2].map(|k| ((hi[k] - lo[k]) / cell) as usize + 1);
        let mut buckets: HashMap<[usize; 3], Vec<usize>> = HashMap::new();
        let mut index = Self { lo, cell, dims, buckets: HashMap::new() };
        for i in 0..n {
            buckets.entry(index.key(&g.position(i))).or_default().push(i);
        }
        index.buckets = buckets;
        index
    }

    fn key(&self, p: &P3) -> [usize; 3] {
        [0, 1, 2].map(|k| (((p[k] - self.lo[k]) / self.cell).max(0.0) as usize).min(self.dims[k] - 1))
    }

    fn nearest(&self, g: &SteinerGraph, p: &P3) -> (usize, f64) {
        let c = self.key(p);
        let mut best = (usize::MAX, f64::INFINITY);
        let max_r = self.dims.iter().copied().max().unwrap_or(1);
        for r in 0..=max_r {
            // every node outside the searched shell is at least (r − 1)·cell away
            if best.0 != usize::MAX && best.1 <= (r as f64 - 1.0).max(0.0) * self.cell {
                break;
            }
            let lo = c.map(|x| x.saturating_sub(r));
            let hi = [0, 1, 2].map(|k| (c[k] + r).min(self.dims[k] - 1));
            for i in lo[0]..=hi[0] {
                for j in lo[1]..=hi[1] {
                    for l in lo[2]..=hi[2] {
                        let on_shell = [i, j, l].iter().zip(&c).any(|(x, y)| x.abs_diff(*y) == r);
                        if r > 0 && !on_shell {
                            continue;
                        }
                        if let Some(b) = self.buckets.get(&[i, j, l]) {
                            for &n in b {
                                let d = dist3(&g.position(n), p);
                                if d < best.1 {
                                    best = (n, d);
                                }
                            }
                        }
                    }
                }
            }
        }
        best
    }
}

/// Distance oracle on a Steiner graph: points snap to the nearest node and
/// single-source distance arrays are cached per source node.
#[derive(Debug)]
pub struct GraphOracle {
    graph: SteinerGraph,
    index: NodeIndex,
    cache: Mutex<SourceCache>,
    name: String,
}

/// Cached single-source arrays, evicted first-in first-out.
#[derive(Debug, Default)]
struct SourceCache {
    arrays: HashMap<usize, Arc<Vec<f64>>>,
    order: VecDeque<usize>,
    capacity: usize,
    /// Sources queried once; the second query computes and caches the full array.
    seen: HashSet<usize>,
}

impl SourceCache {
    fn get(&self, s: &usize) -> Option<&Arc<Vec<f64>>> {
        self.arrays.get(s)
    }

    fn insert(&mut self, s: usize, d: Arc<Vec<f64>>) {
        if self.arrays.insert(s, d).is_none() {
            self.order.push_back(s);
        }
        while self.order.len() > self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.arrays.remove(&old);
            }
        }
    }
}

/// Byte budget for cached distance arrays of one oracle.
pub const ORACLE_CACHE_BYTES: usize = 256 << 20;

impl GraphOracle {
    pub fn new(name: &str, surface: Arc<PolyhedralSurface>, level: u32, null_set: NullSet) -> Result<Self> {
        let graph = SteinerGraph::new(surface, level, null_set)?;
        let index = NodeIndex::build(&graph);
        let capacity = (ORACLE_CACHE_BYTES / (8 * graph.node_count().max(1))).max(2);
        let cache = SourceCache { capacity, ..Default::default() };
        Ok(Self { graph, index, cache: Mutex::new(cache), name: name.to_string() })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn graph(&self) -> &SteinerGraph {
        &self.graph
    }

    pub fn snap(&self, p: &[f64]) -> (usize, f64) {
        self.index.nearest(&self.graph, &[p[0], p[1], p[2]])
    }

    fn from_source(&self, s: usize) -> Arc<Vec<f64>> {
        if let Some(d) = self.cache.lock().expect("cache lock").get(&s) {
            return d.clone();
        }
        let d = Arc::new(self.graph.shortest_paths(s, None));
        self.cache.lock().expect("cache lock").insert(s, d.clone());
        d
    }

    /// Distance between snapped nodes; reuses a cached array from either end.
    pub fn node_distance(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 0.0;
        }
        {
            let mut cache = self.cache.lock().expect("cache lock");
            if let Some(d) = cache.get(&a) {
                return d[b];
            }
            if let Some(d) = cache.get(&b) {
                return d[a];
            }
            if cache.seen.insert(a) {
                drop(cache);
                // Dijkstra settles b with the same value the full run would give
                return self.graph.distance(a, b);
            }
        }
        self.from_source(a)[b]
    }
}

impl crate::rectifiable::Metric for GraphOracle {
    fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        let (na, _) = self.snap(a);
        let (nb, _) = self.snap(b);
        self.node_distance(na, nb)
    }
}

#[cfg(test)]
mod tests {
    use super::super::surface::{flat_square_mesh, sphere_mesh};
    use super::*;
    use crate::rectifiable::Metric;
    use std::f64::consts::PI;

    #[test]
    fn flat_square_diagonal_converges() {
        let s = Arc::new(flat_square_mesh(4, 1.0, true).unwrap());
        let mut prev = f64::INFINITY;
        for level in 0..=4 {
            let d = graph_distance(&s, &[0.0, 0.0, 0.0], &[1.0, 1.0, 0.0], level).unwrap().value;
            assert!(d <= prev + 1e-12);
            assert!(d >= 2f64.sqrt() - 1e-12);
            prev = d;
        }
        assert!((prev - 2f64.sqrt()).abs() < 0.02 * 2f64.sqrt());
    }

    #[test]
    fn sphere_antipodes() {
        let s = Arc::new(sphere_mesh(3).unwrap());
        let d = graph_distance(&s, &[0.0, 0.0, 1.0], &[0.0, 0.0, -1.0], 3).unwrap();
        assert!((d.value - PI).abs() < 0.02 * PI, "{}", d.value);
        assert_eq!(d.snap_error, 0.0);
    }

    #[test]
    fn null_diagonal_is_crossed_transversally() {
        // cells cut along the anti-diagonal, so N consists of mesh edges
        let s = Arc::new(flat_square_mesh(4, 1.0, true).unwrap());
        let n = NullSet::segment([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        for level in [2, 3, 4] {
            let free = graph_distance(&s, &[0.0, 0.0, 0.0], &[1.0, 1.0, 0.0], level).unwrap().value;
            let ess = essential_distance(&s, &[0.0, 0.0, 0.0], &[1.0, 1.0, 0.0], &n, level).unwrap().value;
            assert!(ess >= free - 1e-12);
            assert!((ess - free).abs() < 1e-9, "level {level}: {ess} vs {free}");
        }
    }

    #[test]
    fn travel_along_null_segment_is_blocked() {
        let s = Arc::new(flat_square_mesh(4, 1.0, false).unwrap());
        let n = NullSet::segment([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]);
        let free = graph_distance(&s, &[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0], 2).unwrap().value;
        let ess = essential_distance(&s, &[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &n, 2).unwrap().value;
        assert!((free - 1.0).abs() < 1e-12);
        assert!(ess > free + 1e-3);
    }

    #[test]
    fn isolated_endpoint_is_reported() {
        // thick bands in four directions swallow the square, and every edge
        // runs along one of them
        let s = Arc::new(flat_square_mesh(2, 1.0, false).unwrap());
        let seg = |b: P3| Primitive::Segment { a: [0.0; 3], b, thickness: Some(10.0) };
        let n = NullSet::new(vec![seg([1.0, 0.0, 0.0]), seg([0.0, 1.0, 0.0]), seg([1.0, 1.0, 0.0]), seg([1.0, -1.0, 0.0])]);
        let r = essential_distance(&s, &[0.0, 0.0, 0.0], &[1.0, 1.0, 0.0], &n, 1).unwrap();
        assert!(!r.reachable && r.value.is_infinite());
        assert!(r.diagnostic.unwrap().contains("null set"));
    }

    #[test]
    fn oracle_matches_direct_dijkstra_and_snaps() {
        let s = Arc::new(sphere_mesh(2).unwrap());
        let o = GraphOracle::new("sphere", s.clone(), 2, NullSet::default()).unwrap();
        let p = [0.0, 0.0, 1.0];
        let q = [1.0, 0.0, 0.0];
        let direct = graph_distance(&s, &p, &q, 2).unwrap().value;
        assert_eq!(o.dist(&p, &q), direct);
        assert_eq!(o.dist(&q, &p), direct);
        for n in (0..o.graph().node_count()).step_by(37) {
            let x = o.graph().position(n);
            let jitter = [x[0] + 1e-9, x[1], x[2]];
            assert_eq!(o.snap(&jitter).0, o.graph().snap_point(&jitter).0);
        }
    }
}
