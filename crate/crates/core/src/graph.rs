//! Viewpoint graph and planning-set construction.
//!
//! Viewpoints are lattice points snapped to the centers of known-free cells.
//! A viewpoint's identity is the linear index of its cell, so per-node state
//! such as the visited flag survives re-sampling as the belief grows.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Cell, Point};
use crate::los::line_of_sight;
use crate::world::{BeliefMap, Knowledge};

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("viewpoint graph is empty")]
    EmptyGraph,
    #[error("robot position ({x}, {y}) is not a graph node")]
    PoseNotOnNode { x: f64, y: f64 },
}

/// Uniform sampling lattice over the map bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    pub cols: usize,
    pub rows: usize,
}

impl Default for Lattice {
    fn default() -> Self {
        Self { cols: 40, rows: 30 }
    }
}

impl Lattice {
    /// Distinct cells hit by the lattice points, in lattice order.
    pub fn cells(&self, width: usize, height: usize, cell_size: f64) -> Vec<Cell> {
        let span_x = width as f64 * cell_size;
        let span_y = height as f64 * cell_size;
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for j in 0..self.rows {
            for i in 0..self.cols {
                let p = Point::new(
                    (i as f64 + 0.5) * span_x / self.cols as f64,
                    (j as f64 + 0.5) * span_y / self.rows as f64,
                );
                let c = p.cell(cell_size, width, height);
                if seen.insert(c.index(width)) {
                    out.push(c);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Viewpoint {
    /// Stable identity: linear index of the cell.
    pub id: usize,
    pub cell: Cell,
    pub pos: Point,
}

/// Viewpoints on known-free lattice cells, sorted by id.
pub fn sample_viewpoints(belief: &BeliefMap, lattice: Lattice) -> Vec<Viewpoint> {
    sample_viewpoints_with(belief, lattice, &[])
}

/// Like [`sample_viewpoints`], additionally keeping `extra` cells (robot pose,
/// visited cells, navigation target) as nodes when they are known free.
pub fn sample_viewpoints_with(belief: &BeliefMap, lattice: Lattice, extra: &[Cell]) -> Vec<Viewpoint> {
    let (w, h, cs) = (belief.width(), belief.height(), belief.cell_size());
    let ids: BTreeSet<usize> = lattice
        .cells(w, h, cs)
        .into_iter()
        .chain(extra.iter().copied())
        .filter(|&c| belief.is_free(c))
        .map(|c| c.index(w))
        .collect();
    ids.into_iter()
        .map(|id| {
            let cell = Cell::from_index(id, w);
            Viewpoint { id, cell, pos: cell.center(cs) }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub to: usize,
    pub length: f64,
}

/// Collision-free k-nearest-neighbour graph over viewpoints.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ViewpointGraph {
    pub nodes: Vec<Viewpoint>,
    /// Symmetric adjacency, each list sorted by neighbour index.
    pub adjacency: Vec<Vec<Edge>>,
    pub k: usize,
    index_by_id: HashMap<usize, usize>,
}

impl ViewpointGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of_cell(&self, cell: Cell, width: usize) -> Option<usize> {
        self.index_of_id(cell.index(width))
    }

    pub fn index_of_id(&self, id: usize) -> Option<usize> {
        self.index_by_id.get(&id).copied()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[i].iter().map(|e| e.to)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].binary_search_by_key(&j, |e| e.to).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Undirected edges as `(i, j)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, es)| es.iter().filter(move |e| e.to > i).map(move |e| (i, e.to)))
    }
}

/// Connect each node to its `k` Euclidean-nearest nodes (ties broken by
/// index) when the conservative belief line of sight holds, then symmetrize.
pub fn build_edges(nodes: Vec<Viewpoint>, belief: &BeliefMap, k: usize) -> ViewpointGraph {
    let n = nodes.len();
    let mut pairs = BTreeSet::new();
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        cand.clear();
        cand.extend((0..n).filter(|&j| j != i).map(|j| (nodes[i].pos.dist_sq(nodes[j].pos), j)));
        let take = k.min(cand.len());
        if take == 0 {
            continue;
        }
        if take < cand.len() {
            cand.select_nth_unstable_by(take - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        }
        for &(_, j) in &cand[..take] {
            pairs.insert((i.min(j), i.max(j)));
        }
    }
    let mut adjacency = vec![Vec::new(); n];
    for (i, j) in pairs {
        if line_of_sight(nodes[i].pos, nodes[j].pos, belief) {
            let length = nodes[i].pos.dist(nodes[j].pos);
            adjacency[i].push(Edge { to: j, length });
            adjacency[j].push(Edge { to: i, length });
        }
    }
    for list in &mut adjacency {
        list.sort_by_key(|e| e.to);
    }
    let index_by_id = nodes.iter().enumerate().map(|(i, v)| (v.id, i)).collect();
    ViewpointGraph { nodes, adjacency, k, index_by_id }
}

/// Known-free cells that border unknown space.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrontierSet {
    pub cells: Vec<Cell>,
    pub points: Vec<Point>,
}

impl FrontierSet {
    pub fn len(&self) -> usize {
        self.cells.len()
    }
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

pub fn detect_frontiers(belief: &BeliefMap) -> FrontierSet {
    let (w, h, cs) = (belief.width(), belief.height(), belief.cell_size());
    let cells: Vec<Cell> = belief
        .cells()
        .filter(|&(c, k)| {
            k == Knowledge::Free && c.neighbors4(w, h).any(|n| belief.get(n) == Knowledge::Unknown)
        })
        .map(|(c, _)| c)
        .collect();
    let points = cells.iter().map(|c| c.center(cs)).collect();
    FrontierSet { cells, points }
}

/// Per node, the number of frontier points within `range` and in belief line of sight.
pub fn compute_utilities(nodes: &[Viewpoint], frontiers: &FrontierSet, belief: &BeliefMap, range: f64) -> Vec<u32> {
    let range_sq = range * range + 1e-9;
    nodes
        .iter()
        .map(|v| {
            frontiers
                .points
                .iter()
                .filter(|&&f| v.pos.dist_sq(f) <= range_sq && line_of_sight(v.pos, f, belief))
                .count() as u32
        })
        .collect()
}

/// Greedy beacon aggregation over the non-zero-utility node indices `informative`.
///
/// Nodes are visited in ascending index order. An uncovered node becomes a
/// beacon and covers every informative node within `d_th` that it can see.
pub fn aggregate_beacons(informative: &[usize], nodes: &[Viewpoint], belief: &BeliefMap, d_th: f64) -> Vec<usize> {
    let mut order = informative.to_vec();
    order.sort_unstable();
    order.dedup();
    let d_sq = d_th * d_th + 1e-9;
    let mut covered = vec![false; order.len()];
    let mut beacons = Vec::new();
    for a in 0..order.len() {
        if covered[a] {
            continue;
        }
        let v = order[a];
        beacons.push(v);
        for (b, &u) in order.iter().enumerate() {
            if !covered[b] && nodes[v].pos.dist_sq(nodes[u].pos) <= d_sq && line_of_sight(nodes[v].pos, nodes[u].pos, belief) {
                covered[b] = true;
            }
        }
    }
    beacons
}

/// Per-node planning attributes, co-indexed with the graph nodes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlanningSet {
    pub visited: Vec<bool>,
    pub utility: Vec<u32>,
    pub beacon: Vec<bool>,
}

impl PlanningSet {
    pub fn new(graph: &ViewpointGraph, visited_ids: &BTreeSet<usize>, utility: Vec<u32>, beacons: &[usize]) -> Self {
        let visited = graph.nodes.iter().map(|v| visited_ids.contains(&v.id)).collect();
        let mut beacon = vec![false; graph.len()];
        for &b in beacons {
            beacon[b] = true;
        }
        Self { visited, utility, beacon }
    }

    pub fn beacon_indices(&self) -> Vec<usize> {
        self.beacon.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }
}

/// Number of per-node features in each task mode.
pub const EXPLORATION_FEATURES: usize = 5;
pub const NAVIGATION_FEATURES: usize = 8;

/// Policy input: per-node features plus the structure the networks need.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub feature_dim: usize,
    /// Row-major `len() x feature_dim`.
    pub features: Vec<f64>,
    /// Graph adjacency by node index; defines the encoder mask.
    pub adjacency: Vec<Vec<usize>>,
    pub current: usize,
    pub beacons: Vec<usize>,
    pub neighbors: Vec<usize>,
}

impl Observation {
    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    /// Encoder edge mask, row-major `n x n`: `true` (masked) unless `i == j` or `(i, j)` is an edge.
    pub fn mask(&self) -> Vec<bool> {
        let n = self.len();
        let mut m = vec![true; n * n];
        for (i, adj) in self.adjacency.iter().enumerate() {
            m[i * n + i] = false;
            for &j in adj {
                m[i * n + j] = false;
            }
        }
        m
    }
}

/// Build the per-node feature block.
///
/// Features per node: position relative to the robot over the map diagonal
/// (2), normalized utility (1), visited flag (1), beacon flag (1). With a
/// target, also the target offset over the diagonal (2) and its norm (1).
pub fn assemble_observation(
    graph: &ViewpointGraph,
    planning: &PlanningSet,
    pose: Point,
    target: Option<Point>,
    map_diagonal: f64,
) -> Result<Observation, GraphError> {
    if graph.is_empty() {
        return Err(GraphError::EmptyGraph);
    }
    let current = graph
        .nodes
        .iter()
        .position(|v| v.pos.dist_sq(pose) < 1e-12)
        .ok_or(GraphError::PoseNotOnNode { x: pose.x, y: pose.y })?;
    let feature_dim = if target.is_some() { NAVIGATION_FEATURES } else { EXPLORATION_FEATURES };
    let norm = planning.utility.iter().copied().max().unwrap_or(0).max(1) as f64;
    let mut features = Vec::with_capacity(graph.len() * feature_dim);
    for (i, v) in graph.nodes.iter().enumerate() {
        features.push((v.pos.x - pose.x) / map_diagonal);
        features.push((v.pos.y - pose.y) / map_diagonal);
        features.push(planning.utility[i] as f64 / norm);
        features.push(if planning.visited[i] { 1.0 } else { 0.0 });
        features.push(if planning.beacon[i] { 1.0 } else { 0.0 });
        if let Some(t) = target {
            let dx = (t.x - v.pos.x) / map_diagonal;
            let dy = (t.y - v.pos.y) / map_diagonal;
            features.extend([dx, dy, dx.hypot(dy)]);
        }
    }
    let adjacency: Vec<Vec<usize>> = graph.adjacency.iter().map(|es| es.iter().map(|e| e.to).collect()).collect();
    let neighbors = adjacency[current].clone();
    Ok(Observation {
        feature_dim,
        features,
        adjacency,
        current,
        beacons: planning.beacon_indices(),
        neighbors,
    })
}

/// One line of the per-step graph debug dump (JSON lines).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDump {
    pub step: usize,
    pub pose: Point,
    /// Node positions in meters.
    pub nodes: Vec<Point>,
    /// Undirected edges as node-index pairs with `i < j`.
    pub edges: Vec<(usize, usize)>,
    pub utilities: Vec<u32>,
    pub visited: Vec<bool>,
    /// Node indices of beacons.
    pub beacons: Vec<usize>,
}

impl GraphDump {
    pub fn new(step: usize, pose: Point, graph: &ViewpointGraph, planning: &PlanningSet) -> Self {
        Self {
            step,
            pose,
            nodes: graph.nodes.iter().map(|v| v.pos).collect(),
            edges: graph.edges().collect(),
            utilities: planning.utility.clone(),
            visited: planning.visited.clone(),
            beacons: planning.beacon_indices(),
        }
    }
}
