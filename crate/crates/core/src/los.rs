//! Supercover line traversal and line-of-sight queries.
//!
//! A segment visits every cell whose closed square it touches, so a segment
//! through a grid vertex visits all four cells around that vertex. This keeps
//! sight lines and graph edges from slipping between diagonally adjacent walls.

use crate::geom::{Cell, Point};

/// A grid that can answer "does this cell block a sight line?".
pub trait SightMap {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn cell_size(&self) -> f64;
    fn blocks_sight(&self, cell: Cell) -> bool;
}

/// Walk the supercover of segment `a -> b`, calling `visit` for each cell in
/// order of traversal. Returns `false` as soon as `visit` returns `false`.
pub fn supercover<F>(a: Point, b: Point, cell_size: f64, width: usize, height: usize, mut visit: F) -> bool
where
    F: FnMut(Cell) -> bool,
{
    let (ax, ay) = (a.x / cell_size, a.y / cell_size);
    let (bx, by) = (b.x / cell_size, b.y / cell_size);
    let dx = bx - ax;
    let dy = by - ay;
    let sx: isize = if dx > 0.0 { 1 } else if dx < 0.0 { -1 } else { 0 };
    let sy: isize = if dy > 0.0 { 1 } else if dy < 0.0 { -1 } else { 0 };

    let mut cur = a.cell(cell_size, width, height);
    if !visit(cur) {
        return false;
    }
    let max_steps = (dx.abs().ceil() + dy.abs().ceil()) as usize + 4;
    for _ in 0..max_steps {
        let tx = match sx {
            1 => (cur.x as f64 + 1.0 - ax) / dx,
            -1 => (cur.x as f64 - ax) / dx,
            _ => f64::INFINITY,
        };
        let ty = match sy {
            1 => (cur.y as f64 + 1.0 - ay) / dy,
            -1 => (cur.y as f64 - ay) / dy,
            _ => f64::INFINITY,
        };
        let t = tx.min(ty);
        if !(t < 1.0) {
            break;
        }
        let tie = (tx - ty).abs() <= 1e-12;
        let next = if tie {
            // Passing exactly through a vertex touches both side cells.
            for side in [cur.offset(sx, 0, width, height), cur.offset(0, sy, width, height)]
                .into_iter()
                .flatten()
            {
                if !visit(side) {
                    return false;
                }
            }
            cur.offset(sx, sy, width, height)
        } else if tx < ty {
            cur.offset(sx, 0, width, height)
        } else {
            cur.offset(0, sy, width, height)
        };
        match next {
            Some(n) => {
                cur = n;
                if !visit(cur) {
                    return false;
                }
            }
            None => break,
        }
    }
    true
}

fn canonical(a: Point, b: Point) -> (Point, Point) {
    if (a.x, a.y) <= (b.x, b.y) {
        (a, b)
    } else {
        (b, a)
    }
}

/// True iff no cell touched by the segment blocks sight. Symmetric in `a`, `b`.
pub fn line_of_sight<M: SightMap + ?Sized>(a: Point, b: Point, map: &M) -> bool {
    let (p, q) = canonical(a, b);
    supercover(p, q, map.cell_size(), map.width(), map.height(), |c| !map.blocks_sight(c))
}

/// Sensor ray from `origin` to the center of `target`: the target cell itself
/// may block (walls are seen), every other touched cell must not.
pub fn ray_reaches<M: SightMap + ?Sized>(origin: Point, target: Cell, map: &M) -> bool {
    let (p, q) = canonical(origin, target.center(map.cell_size()));
    supercover(p, q, map.cell_size(), map.width(), map.height(), |c| c == target || !map.blocks_sight(c))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Grid {
        w: usize,
        h: usize,
        walls: Vec<Cell>,
    }

    impl SightMap for Grid {
        fn width(&self) -> usize {
            self.w
        }
        fn height(&self) -> usize {
            self.h
        }
        fn cell_size(&self) -> f64 {
            1.0
        }
        fn blocks_sight(&self, cell: Cell) -> bool {
            self.walls.contains(&cell)
        }
    }

    fn cells_of(a: Point, b: Point) -> Vec<Cell> {
        let mut out = Vec::new();
        supercover(a, b, 1.0, 10, 10, |c| {
            out.push(c);
            true
        });
        out
    }

    #[test]
    fn degenerate_segment_visits_one_cell() {
        let p = Point::new(2.5, 3.5);
        assert_eq!(cells_of(p, p), vec![Cell::new(2, 3)]);
    }

    #[test]
    fn diagonal_through_vertex_touches_side_cells() {
        let cells = cells_of(Point::new(0.5, 0.5), Point::new(1.5, 1.5));
        assert_eq!(cells.len(), 4);
        for c in [Cell::new(0, 0), Cell::new(1, 0), Cell::new(0, 1), Cell::new(1, 1)] {
            assert!(cells.contains(&c));
        }
    }

    #[test]
    fn diagonal_gap_blocks_sight() {
        let g = Grid { w: 3, h: 3, walls: vec![Cell::new(1, 0), Cell::new(0, 1)] };
        assert!(!line_of_sight(Point::new(0.5, 0.5), Point::new(1.5, 1.5), &g));
    }

    #[test]
    fn wall_column_blocks() {
        let g = Grid { w: 5, h: 5, walls: (0..5).map(|y| Cell::new(2, y)).collect() };
        assert!(!line_of_sight(Point::new(0.5, 2.5), Point::new(4.5, 0.5), &g));
        assert!(line_of_sight(Point::new(0.5, 2.5), Point::new(1.5, 0.5), &g));
    }

    #[test]
    fn ray_sees_the_wall_it_hits() {
        let g = Grid { w: 5, h: 1, walls: vec![Cell::new(3, 0)] };
        let o = Point::new(0.5, 0.5);
        assert!(ray_reaches(o, Cell::new(3, 0), &g));
        assert!(!ray_reaches(o, Cell::new(4, 0), &g));
    }
}
