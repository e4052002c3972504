//! Ground-truth occupancy maps, the robot's tri-state belief, and sensing.

use std::collections::VecDeque;
use std::fmt::Write as _;

use thiserror::Error;

use crate::geom::Cell;
use crate::los::{ray_reaches, SightMap};

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("map has no rows")]
    Empty,
    #[error("ragged row {row}: expected {expected} cells, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("unknown character {ch:?} at row {row}, column {col}")]
    UnknownChar { row: usize, col: usize, ch: char },
    #[error("map has no start marker 'S'")]
    MissingStart,
    #[error("duplicate '{marker}' marker at row {row}, column {col}")]
    DuplicateMarker { marker: char, row: usize, col: usize },
    #[error("{what} at row {row}, column {col} lies inside an occupied cell")]
    MarkerInWall { what: &'static str, row: usize, col: usize },
    #[error("{what} at row {row}, column {col} is outside the map")]
    OutOfBounds { what: &'static str, row: usize, col: usize },
    #[error("target at row {row}, column {col} is not reachable from the start")]
    Unreachable { row: usize, col: usize },
    #[error("bad header: {0}")]
    Header(String),
    #[error("cell grid has {found} entries, expected {expected}")]
    Size { expected: usize, found: usize },
}

/// The true environment. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthMap {
    width: usize,
    height: usize,
    cell_size: f64,
    occupied: Vec<bool>,
    start: Cell,
    target: Option<Cell>,
    reachable: Vec<bool>,
    reachable_count: usize,
}

impl GroundTruthMap {
    pub fn new(
        width: usize,
        height: usize,
        cell_size: f64,
        occupied: Vec<bool>,
        start: Cell,
        target: Option<Cell>,
    ) -> Result<Self, MapError> {
        if width == 0 || height == 0 {
            return Err(MapError::Empty);
        }
        if occupied.len() != width * height {
            return Err(MapError::Size { expected: width * height, found: occupied.len() });
        }
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(MapError::Header(format!("cell_size must be positive, got {cell_size}")));
        }
        for (what, cell) in std::iter::once(("start", start)).chain(target.map(|t| ("target", t))) {
            if cell.x >= width || cell.y >= height {
                return Err(MapError::OutOfBounds { what, row: cell.y, col: cell.x });
            }
            if occupied[cell.index(width)] {
                return Err(MapError::MarkerInWall { what, row: cell.y, col: cell.x });
            }
        }
        let reachable = flood_fill(width, height, start, |c| !occupied[c.index(width)]);
        if let Some(t) = target {
            if !reachable[t.index(width)] {
                return Err(MapError::Unreachable { row: t.y, col: t.x });
            }
        }
        let reachable_count = reachable.iter().filter(|&&r| r).count();
        Ok(Self { width, height, cell_size, occupied, start, target, reachable, reachable_count })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }
    pub fn start(&self) -> Cell {
        self.start
    }
    pub fn target(&self) -> Option<Cell> {
        self.target
    }

    #[inline]
    pub fn is_occupied(&self, cell: Cell) -> bool {
        self.occupied[cell.index(self.width)]
    }

    pub fn is_reachable(&self, cell: Cell) -> bool {
        self.reachable[cell.index(self.width)]
    }

    /// Number of free cells 4-connected to the start.
    pub fn reachable_free_count(&self) -> usize {
        self.reachable_count
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    /// Length of the map diagonal in meters.
    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64) * self.cell_size
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.width * self.height).map(move |i| Cell::from_index(i, self.width))
    }

    /// Serialize to the map-file text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "; cell_size={}", self.cell_size);
        for y in 0..self.height {
            for x in 0..self.width {
                let c = Cell::new(x, y);
                let ch = if c == self.start {
                    'S'
                } else if Some(c) == self.target {
                    'T'
                } else if self.is_occupied(c) {
                    '#'
                } else {
                    '.'
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}

impl SightMap for GroundTruthMap {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn cell_size(&self) -> f64 {
        self.cell_size
    }
    fn blocks_sight(&self, cell: Cell) -> bool {
        self.is_occupied(cell)
    }
}

/// Parse the map-file format: `.` free, `#` occupied, `S` start, `T` target.
/// An optional first line starting with `;` may carry `cell_size=<float>`.
pub fn load_map(text: &str) -> Result<GroundTruthMap, MapError> {
    let mut lines = text.lines().map(|l| l.trim_end_matches('\r')).peekable();
    let mut cell_size = 1.0;
    if let Some(first) = lines.peek() {
        if let Some(comment) = first.strip_prefix(';') {
            for tok in comment.split_whitespace() {
                if let Some(v) = tok.strip_prefix("cell_size=") {
                    cell_size = v.parse::<f64>().map_err(|e| MapError::Header(format!("cell_size: {e}")))?;
                }
            }
            lines.next();
        }
    }
    let rows: Vec<&str> = lines.collect();
    let rows: Vec<&str> = {
        let end = rows.iter().rposition(|r| !r.is_empty()).map_or(0, |i| i + 1);
        rows[..end].to_vec()
    };
    if rows.is_empty() {
        return Err(MapError::Empty);
    }
    let width = rows[0].chars().count();
    if width == 0 {
        return Err(MapError::Empty);
    }
    let mut occupied = Vec::with_capacity(width * rows.len());
    let mut start = None;
    let mut target = None;
    for (row, line) in rows.iter().enumerate() {
        let found = line.chars().count();
        if found != width {
            return Err(MapError::RaggedRow { row, expected: width, found });
        }
        for (col, ch) in line.chars().enumerate() {
            let occ = match ch {
                '.' => false,
                '#' => true,
                'S' | 'T' => {
                    let slot = if ch == 'S' { &mut start } else { &mut target };
                    if slot.is_some() {
                        return Err(MapError::DuplicateMarker { marker: ch, row, col });
                    }
                    *slot = Some(Cell::new(col, row));
                    false
                }
                _ => return Err(MapError::UnknownChar { row, col, ch }),
            };
            occupied.push(occ);
        }
    }
    let start = start.ok_or(MapError::MissingStart)?;
    GroundTruthMap::new(width, rows.len(), cell_size, occupied, start, target)
}

/// 4-connected flood fill from `seed` over cells satisfying `passable`.
pub fn flood_fill<F: Fn(Cell) -> bool>(width: usize, height: usize, seed: Cell, passable: F) -> Vec<bool> {
    let mut seen = vec![false; width * height];
    if !passable(seed) {
        return seen;
    }
    let mut queue = VecDeque::from([seed]);
    seen[seed.index(width)] = true;
    while let Some(c) = queue.pop_front() {
        for n in c.neighbors4(width, height) {
            let i = n.index(width);
            if !seen[i] && passable(n) {
                seen[i] = true;
                queue.push_back(n);
            }
        }
    }
    seen
}

/// What the robot knows about a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Knowledge {
    Unknown,
    Free,
    Occupied,
}

/// The robot's partial map. Cells only ever move from `Unknown` to a known label.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefMap {
    width: usize,
    height: usize,
    cell_size: f64,
    cells: Vec<Knowledge>,
    free_known: usize,
}

impl BeliefMap {
    pub fn unknown(width: usize, height: usize, cell_size: f64) -> Self {
        Self { width, height, cell_size, cells: vec![Knowledge::Unknown; width * height], free_known: 0 }
    }

    pub fn for_map(truth: &GroundTruthMap) -> Self {
        Self::unknown(truth.width, truth.height, truth.cell_size)
    }

    /// A belief that already knows every cell of `truth`.
    pub fn fully_revealed(truth: &GroundTruthMap) -> Self {
        let mut b = Self::for_map(truth);
        for c in truth.cells() {
            b.reveal(c, truth.is_occupied(c));
        }
        b
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    #[inline]
    pub fn get(&self, cell: Cell) -> Knowledge {
        self.cells[cell.index(self.width)]
    }

    #[inline]
    pub fn is_free(&self, cell: Cell) -> bool {
        self.get(cell) == Knowledge::Free
    }

    pub fn free_known_count(&self) -> usize {
        self.free_known
    }

    pub fn known_count(&self) -> usize {
        self.cells.iter().filter(|&&k| k != Knowledge::Unknown).count()
    }

    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64) * self.cell_size
    }

    pub fn cells(&self) -> impl Iterator<Item = (Cell, Knowledge)> + '_ {
        self.cells.iter().enumerate().map(move |(i, &k)| (Cell::from_index(i, self.width), k))
    }

    /// Set a cell's label. Returns true if the cell was previously unknown.
    /// Known cells are never relabelled.
    pub fn reveal(&mut self, cell: Cell, occupied: bool) -> bool {
        let slot = &mut self.cells[cell.index(self.width)];
        if *slot != Knowledge::Unknown {
            return false;
        }
        *slot = if occupied { Knowledge::Occupied } else { Knowledge::Free };
        if !occupied {
            self.free_known += 1;
        }
        true
    }
}

/// Conservative view: anything not known to be free blocks sight.
impl SightMap for BeliefMap {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn cell_size(&self) -> f64 {
        self.cell_size
    }
    fn blocks_sight(&self, cell: Cell) -> bool {
        !self.is_free(cell)
    }
}

/// Reveal every cell whose center is within `range` of the robot and visible
/// from it in the ground truth. Returns exactly the cells that went from
/// unknown to known, in row-major order.
pub fn sense_and_update(pose: Cell, truth: &GroundTruthMap, belief: &mut BeliefMap, range: f64) -> Vec<Cell> {
    let cs = truth.cell_size;
    let origin = pose.center(cs);
    let reach = (range / cs).ceil() as isize + 1;
    let range_sq = range * range + 1e-9;
    let x0 = (pose.x as isize - reach).max(0) as usize;
    let y0 = (pose.y as isize - reach).max(0) as usize;
    let x1 = ((pose.x as isize + reach) as usize).min(truth.width - 1);
    let y1 = ((pose.y as isize + reach) as usize).min(truth.height - 1);
    let mut revealed = Vec::new();
    for y in y0..=y1 {
        for x in x0..=x1 {
            let c = Cell::new(x, y);
            if belief.get(c) != Knowledge::Unknown {
                continue;
            }
            if c.center(cs).dist_sq(origin) > range_sq {
                continue;
            }
            if ray_reaches(origin, c, truth) && belief.reveal(c, truth.is_occupied(c)) {
                revealed.push(c);
            }
        }
    }
    revealed
}

/// Fraction of the start-reachable free cells that the belief marks free.
pub fn coverage_fraction(belief: &BeliefMap, truth: &GroundTruthMap) -> f64 {
    if truth.reachable_count == 0 {
        return 1.0;
    }
    let known = truth
        .cells()
        .filter(|&c| truth.is_reachable(c) && belief.is_free(c))
        .count();
    known as f64 / truth.reachable_count as f64
}
