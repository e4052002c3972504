#![allow(dead_code)]

use bplan_core::{Cell, GroundTruthMap, Point};
use rand::Rng;

/// Random obstacle map; start at the first free cell found from the top-left.
pub fn random_map<R: Rng>(rng: &mut R, w: usize, h: usize, density: f64) -> GroundTruthMap {
    loop {
        let occupied: Vec<bool> = (0..w * h).map(|_| rng.gen_bool(density)).collect();
        let Some(i) = occupied.iter().position(|&o| !o) else { continue };
        let start = Cell::from_index(i, w);
        return GroundTruthMap::new(w, h, 1.0, occupied, start, None).unwrap();
    }
}

/// Does the closed unit square of `cell` intersect the segment `a -> b`?
/// Liang-Barsky clipping in cell units, inclusive on the boundary.
pub fn segment_touches(a: Point, b: Point, cell: Cell) -> bool {
    let (x0, x1) = (cell.x as f64, cell.x as f64 + 1.0);
    let (y0, y1) = (cell.y as f64, cell.y as f64 + 1.0);
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [(-dx, a.x - x0), (dx, x1 - a.x), (-dy, a.y - y0), (dy, y1 - a.y)] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    t0 <= t1
}

/// Cells whose closed square touches the segment, by exhaustive scan of the bounding box.
pub fn touched_cells(a: Point, b: Point, w: usize, h: usize) -> Vec<Cell> {
    let mut out = Vec::new();
    let xs = (a.x.min(b.x).floor() as isize - 1).max(0) as usize..=((a.x.max(b.x).floor() as usize) + 1).min(w - 1);
    for y in (a.y.min(b.y).floor() as isize - 1).max(0) as usize..=((a.y.max(b.y).floor() as usize) + 1).min(h - 1) {
        for x in xs.clone() {
            if segment_touches(a, b, Cell::new(x, y)) {
                out.push(Cell::new(x, y));
            }
        }
    }
    out
}

/// Independent Dijkstra over the 8-connected, no-corner-cutting move model.
/// Returns the cost in units of cell size (from straight/diagonal step counts), or None.
pub fn dijkstra(passable: &dyn Fn(Cell) -> bool, w: usize, h: usize, s: Cell, g: Cell) -> Option<f64> {
    let n = w * h;
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut counts = vec![(0usize, 0usize); n];
    if !passable(s) || !passable(g) {
        return None;
    }
    dist[s.index(w)] = 0.0;
    loop {
        // O(n^2) selection keeps this oracle free of heap ordering subtleties.
        let mut best = None;
        for i in 0..n {
            if !done[i] && dist[i].is_finite() && best.is_none_or(|b: usize| dist[i] < dist[b]) {
                best = Some(i);
            }
        }
        let Some(u) = best else { return None };
        if u == g.index(w) {
            let (straight, diag) = counts[u];
            return Some(straight as f64 + diag as f64 * std::f64::consts::SQRT_2);
        }
        done[u] = true;
        let c = Cell::from_index(u, w);
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let Some(nc) = c.offset(dx, dy, w, h) else { continue };
                if !passable(nc) {
                    continue;
                }
                if dx != 0 && dy != 0 {
                    let side_a = c.offset(dx, 0, w, h).unwrap();
                    let side_b = c.offset(0, dy, w, h).unwrap();
                    if !passable(side_a) || !passable(side_b) {
                        continue;
                    }
                }
                let step = if dx != 0 && dy != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
                let ni = nc.index(w);
                if dist[u] + step < dist[ni] {
                    dist[ni] = dist[u] + step;
                    let (a, b) = counts[u];
                    counts[ni] = if dx != 0 && dy != 0 { (a, b + 1) } else { (a + 1, b) };
                }
            }
        }
    }
}
