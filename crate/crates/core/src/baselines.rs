//! Classical grid planners: octile A*, an optimistic replanning navigator and
//! nearest-frontier exploration.
//!
//! Motion is 8-connected. A diagonal move is allowed only when both cells it
//! squeezes between are passable, so every move is also a valid sight line.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::geom::Cell;
use crate::graph::detect_frontiers;
use crate::world::{coverage_fraction, sense_and_update, BeliefMap, GroundTruthMap, Knowledge};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("no path from ({0}, {1}) to ({2}, {3})")]
    NoPath(usize, usize, usize, usize),
    #[error("step budget of {0} exhausted")]
    StepLimit(usize),
}

/// Which cells a planner may enter.
pub trait Passable {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn cell_size(&self) -> f64;
    fn passable(&self, cell: Cell) -> bool;
}

impl Passable for GroundTruthMap {
    fn width(&self) -> usize {
        GroundTruthMap::width(self)
    }
    fn height(&self) -> usize {
        GroundTruthMap::height(self)
    }
    fn cell_size(&self) -> f64 {
        GroundTruthMap::cell_size(self)
    }
    fn passable(&self, cell: Cell) -> bool {
        !self.is_occupied(cell)
    }
}

/// Belief view where only known-free cells are traversable.
pub struct KnownFree<'a>(pub &'a BeliefMap);

/// Belief view where unknown cells are assumed traversable.
pub struct Optimistic<'a>(pub &'a BeliefMap);

macro_rules! belief_view {
    ($t:ident, $rule:expr) => {
        impl Passable for $t<'_> {
            fn width(&self) -> usize {
                self.0.width()
            }
            fn height(&self) -> usize {
                self.0.height()
            }
            fn cell_size(&self) -> f64 {
                self.0.cell_size()
            }
            fn passable(&self, cell: Cell) -> bool {
                let rule: fn(Knowledge) -> bool = $rule;
                rule(self.0.get(cell))
            }
        }
    };
}

belief_view!(KnownFree, |k| k == Knowledge::Free);
belief_view!(Optimistic, |k| k != Knowledge::Occupied);

/// The eight moves, straight ones first.
pub const MOVES: [(isize, isize); 8] = [(0, -1), (-1, 0), (1, 0), (0, 1), (-1, -1), (1, -1), (-1, 1), (1, 1)];

/// Successors of `cell` with their step counts `(straight, diagonal)`.
pub fn successors<P: Passable + ?Sized>(map: &P, cell: Cell) -> impl Iterator<Item = (Cell, bool)> + '_ {
    let (w, h) = (map.width(), map.height());
    MOVES.into_iter().filter_map(move |(dx, dy)| {
        let n = cell.offset(dx, dy, w, h)?;
        if !map.passable(n) {
            return None;
        }
        let diagonal = dx != 0 && dy != 0;
        if diagonal {
            let a = cell.offset(dx, 0, w, h)?;
            let b = cell.offset(0, dy, w, h)?;
            if !map.passable(a) || !map.passable(b) {
                return None;
            }
        }
        Some((n, diagonal))
    })
}

/// Whether `a -> b` is a single legal move.
pub fn is_move<P: Passable + ?Sized>(map: &P, a: Cell, b: Cell) -> bool {
    successors(map, a).any(|(n, _)| n == b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    pub cells: Vec<Cell>,
    pub cost: f64,
}

impl GridPath {
    /// Path cost from step counts: straight steps times the cell size plus
    /// diagonal steps times sqrt(2) times the cell size.
    pub fn cost_of(cells: &[Cell], cell_size: f64) -> f64 {
        let (mut straight, mut diag) = (0usize, 0usize);
        for w in cells.windows(2) {
            if w[0].x != w[1].x && w[0].y != w[1].y {
                diag += 1;
            } else {
                straight += 1;
            }
        }
        (straight as f64 + diag as f64 * std::f64::consts::SQRT_2) * cell_size
    }
}

/// Octile distance in cells.
fn octile(a: Cell, b: Cell) -> f64 {
    let dx = a.x.abs_diff(b.x) as f64;
    let dy = a.y.abs_diff(b.y) as f64;
    dx.max(dy) + (std::f64::consts::SQRT_2 - 1.0) * dx.min(dy)
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    h: f64,
    index: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (f, h, index).
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Cost-optimal 8-connected path under the admissible octile heuristic.
pub fn astar<P: Passable + ?Sized>(start: Cell, goal: Cell, map: &P) -> Result<GridPath, PlanError> {
    let no_path = PlanError::NoPath(start.x, start.y, goal.x, goal.y);
    if !map.passable(start) || !map.passable(goal) {
        return Err(no_path);
    }
    let w = map.width();
    let n = w * map.height();
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    let si = start.index(w);
    g[si] = 0.0;
    let h0 = octile(start, goal);
    open.push(Open { f: h0, h: h0, index: si });
    while let Some(Open { index, .. }) = open.pop() {
        if closed[index] {
            continue;
        }
        closed[index] = true;
        let cell = Cell::from_index(index, w);
        if cell == goal {
            let mut cells = vec![cell];
            let mut cur = index;
            while parent[cur] != usize::MAX {
                cur = parent[cur];
                cells.push(Cell::from_index(cur, w));
            }
            cells.reverse();
            let cost = GridPath::cost_of(&cells, map.cell_size());
            return Ok(GridPath { cells, cost });
        }
        for (next, diagonal) in successors(map, cell) {
            let ni = next.index(w);
            if closed[ni] {
                continue;
            }
            let step = if diagonal { std::f64::consts::SQRT_2 } else { 1.0 };
            let cand = g[index] + step;
            if cand < g[ni] {
                g[ni] = cand;
                parent[ni] = index;
                let h = octile(next, goal);
                open.push(Open { f: cand + h, h, index: ni });
            }
        }
    }
    Err(no_path)
}

/// Result of a replanning navigation run.
#[derive(Debug, Clone, PartialEq)]
pub struct NavRun {
    /// Visited cells including the start.
    pub trajectory: Vec<Cell>,
    pub cost: f64,
    pub replans: usize,
    pub belief: BeliefMap,
}

/// Navigate to `target` through unknown space, assuming unknown cells are free.
///
/// The robot senses, follows its current A* plan one cell at a time and
/// replans whenever newly sensed cells make the remaining plan illegal.
pub fn replan_navigate(
    truth: &GroundTruthMap,
    start: Cell,
    target: Cell,
    range: f64,
    initial: Option<BeliefMap>,
) -> Result<NavRun, PlanError> {
    let mut belief = initial.unwrap_or_else(|| BeliefMap::for_map(truth));
    let mut pose = start;
    sense_and_update(pose, truth, &mut belief, range);
    let mut trajectory = vec![pose];
    let mut plan = astar(pose, target, &Optimistic(&belief))?;
    let mut cursor = 0usize;
    let mut replans = 0usize;
    let budget = truth.width() * truth.height() * 8;
    while pose != target {
        if trajectory.len() > budget {
            return Err(PlanError::StepLimit(budget));
        }
        pose = plan.cells[cursor + 1];
        cursor += 1;
        trajectory.push(pose);
        let revealed = sense_and_update(pose, truth, &mut belief, range);
        if revealed.is_empty() || pose == target {
            continue;
        }
        let view = Optimistic(&belief);
        let still_valid = plan.cells[cursor..].windows(2).all(|w| is_move(&view, w[0], w[1]));
        if !still_valid {
            plan = astar(pose, target, &view)?;
            cursor = 0;
            replans += 1;
        }
    }
    let cost = GridPath::cost_of(&trajectory, truth.cell_size());
    Ok(NavRun { trajectory, cost, replans, belief })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrontierStep {
    Move(Cell),
    Done,
}

/// Next move toward the frontier with the cheapest known-free path.
/// Ties go to the lower cell index.
pub fn nearest_frontier_step(belief: &BeliefMap, pose: Cell) -> FrontierStep {
    let frontiers = detect_frontiers(belief);
    let view = KnownFree(belief);
    let costs = dijkstra_costs(&view, pose);
    let w = belief.width();
    let best = frontiers
        .cells
        .iter()
        .filter(|&&c| c != pose && costs[c.index(w)].is_finite())
        .min_by(|a, b| costs[a.index(w)].total_cmp(&costs[b.index(w)]).then(a.index(w).cmp(&b.index(w))));
    match best {
        None => FrontierStep::Done,
        Some(&goal) => match astar(pose, goal, &view) {
            Ok(path) => FrontierStep::Move(path.cells[1]),
            Err(_) => FrontierStep::Done,
        },
    }
}

/// Single-source path costs in cells over the passable grid.
fn dijkstra_costs<P: Passable + ?Sized>(map: &P, source: Cell) -> Vec<f64> {
    let w = map.width();
    let mut dist = vec![f64::INFINITY; w * map.height()];
    if !map.passable(source) {
        return dist;
    }
    let mut heap = BinaryHeap::new();
    dist[source.index(w)] = 0.0;
    heap.push(Open { f: 0.0, h: 0.0, index: source.index(w) });
    while let Some(Open { f, index, .. }) = heap.pop() {
        if f > dist[index] {
            continue;
        }
        let cell = Cell::from_index(index, w);
        for (n, diagonal) in successors(map, cell) {
            let nd = f + if diagonal { std::f64::consts::SQRT_2 } else { 1.0 };
            let ni = n.index(w);
            if nd < dist[ni] {
                dist[ni] = nd;
                heap.push(Open { f: nd, h: 0.0, index: ni });
            }
        }
    }
    dist
}

/// Geodesic distance in meters from every cell to `goal` over the ground truth.
pub fn geodesic_field(truth: &GroundTruthMap, goal: Cell) -> Vec<f64> {
    let cs = truth.cell_size();
    dijkstra_costs(truth, goal).into_iter().map(|d| d * cs).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontierRun {
    pub trajectory: Vec<Cell>,
    pub cost: f64,
    pub coverage: f64,
    /// False if the step budget ran out before exploration finished.
    pub finished: bool,
}

/// Explore `truth` from its start with [`nearest_frontier_step`] until no
/// frontier remains or `max_steps` moves have been made.
pub fn frontier_explore(truth: &GroundTruthMap, range: f64, max_steps: usize) -> FrontierRun {
    let mut belief = BeliefMap::for_map(truth);
    let mut pose = truth.start();
    sense_and_update(pose, truth, &mut belief, range);
    let mut trajectory = vec![pose];
    let mut finished = false;
    while trajectory.len() <= max_steps {
        match nearest_frontier_step(&belief, pose) {
            FrontierStep::Done => {
                finished = true;
                break;
            }
            FrontierStep::Move(next) => {
                pose = next;
                trajectory.push(pose);
                sense_and_update(pose, truth, &mut belief, range);
            }
        }
    }
    let cost = GridPath::cost_of(&trajectory, truth.cell_size());
    FrontierRun { coverage: coverage_fraction(&belief, truth), trajectory, cost, finished }
}
