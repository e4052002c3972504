//! Episode state: belief, pose, viewpoint graph and reward bookkeeping.

use std::collections::BTreeSet;
use std::sync::Arc;

use bplan_core::baselines::geodesic_field;
use bplan_core::graph::{
    aggregate_beacons, assemble_observation, build_edges, compute_utilities, detect_frontiers, sample_viewpoints_with,
    GraphDump, GraphError,
};
use bplan_core::{
    coverage_fraction, sense_and_update, BeliefMap, Cell, GroundTruthMap, Knowledge, Lattice, Observation, PlanningSet, Point,
    ViewpointGraph,
};
use thiserror::Error;

/// Coverage at which exploration counts as complete.
pub const COMPLETION: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    Exploration,
    Navigation,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Exploration => "exploration",
            Task::Navigation => "navigation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardConfig {
    pub step_cost: f64,
    pub done_bonus: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { step_cost: 0.5, done_bonus: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub task: Task,
    /// Sensor range in meters.
    pub range: f64,
    pub max_steps: usize,
    pub lattice: Lattice,
    pub k: usize,
    /// Beacon aggregation radius; half the range when unset.
    pub d_th: Option<f64>,
    pub seed: u64,
    pub reward: RewardConfig,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            task: Task::Exploration,
            range: 20.0,
            max_steps: 128,
            lattice: Lattice::default(),
            k: 20,
            d_th: None,
            seed: 0,
            reward: RewardConfig::default(),
        }
    }
}

impl EpisodeConfig {
    pub fn d_th(&self) -> f64 {
        self.d_th.unwrap_or(self.range / 2.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("navigation needs a map with a target")]
    NoTarget,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("node {0} is not a neighbor of the current node")]
    NotNeighbor(usize),
}

/// Outcome of moving the robot once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveOutcome {
    pub reward: f64,
    pub distance: f64,
    pub done: bool,
    pub success: bool,
}

#[derive(Debug, Clone)]
pub struct EnvState {
    pub truth: Arc<GroundTruthMap>,
    pub config: EpisodeConfig,
    pub belief: BeliefMap,
    pub pose: Cell,
    /// Node ids (cell indices) the robot has stood on.
    pub visited: BTreeSet<usize>,
    pub graph: ViewpointGraph,
    pub planning: PlanningSet,
    pub target: Option<Cell>,
    geodesic: Option<Arc<Vec<f64>>>,
    pub steps: usize,
    pub distance: f64,
    pub done: bool,
    pub success: bool,
}

impl EnvState {
    /// Places the robot at the map start, senses and builds the first graph.
    pub fn reset(truth: Arc<GroundTruthMap>, config: EpisodeConfig) -> Result<Self, EnvError> {
        let target = match config.task {
            Task::Exploration => None,
            Task::Navigation => Some(truth.target().ok_or(EnvError::NoTarget)?),
        };
        let geodesic = target.map(|t| Arc::new(geodesic_field(&truth, t)));
        let mut belief = BeliefMap::for_map(&truth);
        let pose = truth.start();
        sense_and_update(pose, &truth, &mut belief, config.range);
        let visited = BTreeSet::from([pose.index(truth.width())]);
        let mut env = Self {
            graph: ViewpointGraph::default(),
            planning: PlanningSet::default(),
            truth,
            config,
            belief,
            pose,
            visited,
            target,
            geodesic,
            steps: 0,
            distance: 0.0,
            done: false,
            success: false,
        };
        env.evaluate_done();
        env.refresh_graph();
        if env.config.task == Task::Exploration && env.planning.beacon_indices().is_empty() {
            env.done = true;
        }
        Ok(env)
    }

    /// Replaces the belief with the ground truth and rebuilds the graph.
    pub fn reveal_all(&mut self) {
        self.belief = BeliefMap::fully_revealed(&self.truth);
        self.evaluate_done();
        self.refresh_graph();
    }

    pub fn coverage(&self) -> f64 {
        coverage_fraction(&self.belief, &self.truth)
    }

    pub fn cell_size(&self) -> f64 {
        self.truth.cell_size()
    }

    pub fn pose_point(&self) -> Point {
        self.pose.center(self.cell_size())
    }

    fn geodesic_at(&self, c: Cell) -> f64 {
        self.geodesic.as_ref().map_or(0.0, |g| g[c.index(self.truth.width())])
    }

    fn arrived(&self) -> bool {
        self.target.is_some_and(|t| t.chebyshev(self.pose) <= 1)
    }

    fn evaluate_done(&mut self) {
        match self.config.task {
            Task::Exploration => {
                if self.coverage() >= COMPLETION {
                    self.done = true;
                    self.success = true;
                }
            }
            Task::Navigation => {
                if self.arrived() {
                    self.done = true;
                    self.success = true;
                }
            }
        }
    }

    /// Rebuilds the viewpoint graph, utilities and beacons from the belief.
    pub fn refresh_graph(&mut self) {
        let w = self.truth.width();
        let mut extra: Vec<Cell> = vec![self.pose];
        extra.extend(self.visited.iter().map(|&id| Cell::from_index(id, w)));
        if let Some(t) = self.target {
            if self.belief.get(t) == Knowledge::Free {
                extra.push(t);
            }
        }
        let nodes = sample_viewpoints_with(&self.belief, self.config.lattice, &extra);
        let graph = build_edges(nodes, &self.belief, self.config.k);
        let frontiers = detect_frontiers(&self.belief);
        let utility = compute_utilities(&graph.nodes, &frontiers, &self.belief, self.config.range);
        let informative: Vec<usize> = (0..graph.len()).filter(|&i| utility[i] > 0).collect();
        let mut beacons = aggregate_beacons(&informative, &graph.nodes, &self.belief, self.config.d_th());
        if let Some(t) = self.target {
            if let Some(ti) = graph.index_of_cell(t, w) {
                beacons.push(ti);
            }
            if beacons.is_empty() {
                let tp = t.center(self.cell_size());
                let nearest = (0..graph.len())
                    .min_by(|&a, &b| graph.nodes[a].pos.dist_sq(tp).total_cmp(&graph.nodes[b].pos.dist_sq(tp)).then(a.cmp(&b)));
                beacons.extend(nearest);
            }
            beacons.sort_unstable();
            beacons.dedup();
        }
        self.planning = PlanningSet::new(&graph, &self.visited, utility, &beacons);
        self.graph = graph;
    }

    pub fn current_node(&self) -> Option<usize> {
        self.graph.index_of_cell(self.pose, self.truth.width())
    }

    pub fn observation(&self) -> Result<Observation, EnvError> {
        let target = self.target.map(|t| t.center(self.cell_size()));
        Ok(assemble_observation(&self.graph, &self.planning, self.pose_point(), target, self.truth.diagonal())?)
    }

    pub fn dump(&self) -> GraphDump {
        GraphDump::new(self.steps, self.pose_point(), &self.graph, &self.planning)
    }

    /// Moves straight to cell `to`, senses there and scores the step.
    /// Does not touch the graph; see [`EnvState::refresh_graph`].
    pub fn move_to(&mut self, to: Cell) -> MoveOutcome {
        let cs = self.cell_size();
        let step = self.pose.center(cs).dist(to.center(cs));
        let geo_before = self.geodesic_at(self.pose);
        self.pose = to;
        self.visited.insert(to.index(self.truth.width()));
        let revealed = sense_and_update(to, &self.truth, &mut self.belief, self.config.range);
        self.steps += 1;
        self.distance += step;
        let was_success = self.success;
        self.evaluate_done();
        let rc = &self.config.reward;
        let mut reward = -rc.step_cost;
        match self.config.task {
            Task::Exploration => {
                let free = revealed.iter().filter(|&&c| !self.truth.is_occupied(c)).count() as f64;
                reward += free * cs * cs / (self.config.range * self.config.range);
            }
            Task::Navigation => reward += (geo_before - self.geodesic_at(to)) / self.config.range,
        }
        if self.success && !was_success {
            reward += rc.done_bonus;
        }
        MoveOutcome { reward, distance: step, done: self.done, success: self.success }
    }

    /// Traverses the graph edge from the current node to node `j` and rebuilds
    /// the graph. Exploration also ends when no beacon remains.
    pub fn step_to_node(&mut self, j: usize) -> Result<MoveOutcome, EnvError> {
        let cur = self.current_node().ok_or(EnvError::Graph(GraphError::PoseNotOnNode {
            x: self.pose_point().x,
            y: self.pose_point().y,
        }))?;
        if !self.graph.has_edge(cur, j) {
            return Err(EnvError::NotNeighbor(j));
        }
        let to = self.graph.nodes[j].cell;
        let mut out = self.move_to(to);
        self.refresh_graph();
        if self.config.task == Task::Exploration && !self.done && self.planning.beacon_indices().is_empty() {
            self.done = true;
            out.done = true;
        }
        Ok(out)
    }
}
