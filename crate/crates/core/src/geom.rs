use serde::{Deserialize, Serialize};

/// Integer grid coordinate. `x` is the column, `y` the row (row 0 is the first line of a map file).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    /// Row-major linear index for a grid of the given width.
    #[inline]
    pub fn index(self, width: usize) -> usize {
        self.y * width + self.x
    }

    #[inline]
    pub fn from_index(index: usize, width: usize) -> Self {
        Self { x: index % width, y: index / width }
    }

    /// Center of the cell in meters.
    #[inline]
    pub fn center(self, cell_size: f64) -> Point {
        Point::new((self.x as f64 + 0.5) * cell_size, (self.y as f64 + 0.5) * cell_size)
    }

    pub fn chebyshev(self, other: Cell) -> usize {
        self.x.abs_diff(other.x).max(self.y.abs_diff(other.y))
    }

    /// 4-connected neighbours that lie inside a `width` x `height` grid.
    pub fn neighbors4(self, width: usize, height: usize) -> impl Iterator<Item = Cell> {
        const OFFS: [(isize, isize); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];
        OFFS.into_iter().filter_map(move |(dx, dy)| self.offset(dx, dy, width, height))
    }

    pub fn offset(self, dx: isize, dy: isize, width: usize, height: usize) -> Option<Cell> {
        let x = self.x as isize + dx;
        let y = self.y as isize + dy;
        if x < 0 || y < 0 || x >= width as isize || y >= height as isize {
            None
        } else {
            Some(Cell::new(x as usize, y as usize))
        }
    }
}

/// Continuous 2D point in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    #[inline]
    pub fn dist_sq(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    /// Cell containing the point, clamped into the grid.
    pub fn cell(self, cell_size: f64, width: usize, height: usize) -> Cell {
        let cx = (self.x / cell_size).floor().max(0.0) as usize;
        let cy = (self.y / cell_size).floor().max(0.0) as usize;
        Cell::new(cx.min(width - 1), cy.min(height - 1))
    }
}
