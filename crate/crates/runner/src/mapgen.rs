//! Procedural map corpora and map-file IO.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bplan_core::world::flood_fill;
use bplan_core::{load_map, Cell, GroundTruthMap, MapError};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Minimum start-to-target distance as a fraction of the map diagonal.
pub const TARGET_SEPARATION: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Style {
    Rooms,
    Cave,
    Corridor,
}

impl Style {
    pub fn name(self) -> &'static str {
        match self {
            Style::Rooms => "rooms",
            Style::Cave => "cave",
            Style::Corridor => "corridor",
        }
    }
}

impl FromStr for Style {
    type Err = MapGenError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rooms" => Ok(Style::Rooms),
            "cave" => Ok(Style::Cave),
            "corridor" => Ok(Style::Corridor),
            _ => Err(MapGenError::Style(s.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum MapGenError {
    #[error("unknown map style `{0}`")]
    Style(String),
    #[error("maps must be at least 10x10, got {0}x{1}")]
    TooSmall(usize, usize),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad map file {path}: {source}")]
    Map { path: PathBuf, source: MapError },
    #[error("no map files in {0}")]
    EmptyCorpus(PathBuf),
}

struct Grid {
    w: usize,
    h: usize,
    occ: Vec<bool>,
}

impl Grid {
    fn new(w: usize, h: usize, fill: bool) -> Self {
        Self { w, h, occ: vec![fill; w * h] }
    }

    fn set(&mut self, x: usize, y: usize, v: bool) {
        self.occ[y * self.w + x] = v;
    }

    fn get(&self, x: usize, y: usize) -> bool {
        self.occ[y * self.w + x]
    }

    fn border(&mut self) {
        for x in 0..self.w {
            self.set(x, 0, true);
            self.set(x, self.h - 1, true);
        }
        for y in 0..self.h {
            self.set(0, y, true);
            self.set(self.w - 1, y, true);
        }
    }

    fn free_cells(&self) -> Vec<Cell> {
        (0..self.w * self.h).filter(|&i| !self.occ[i]).map(|i| Cell::from_index(i, self.w)).collect()
    }

    /// Index mask of the largest 4-connected free component.
    fn largest_component(&self) -> Vec<bool> {
        let mut seen = vec![false; self.occ.len()];
        let mut best: Vec<bool> = vec![false; self.occ.len()];
        let mut best_size = 0;
        for i in 0..self.occ.len() {
            if self.occ[i] || seen[i] {
                continue;
            }
            let comp = flood_fill(self.w, self.h, Cell::from_index(i, self.w), |c| !self.occ[c.index(self.w)]);
            let size = comp.iter().filter(|&&r| r).count();
            for (s, &r) in seen.iter_mut().zip(&comp) {
                *s |= r;
            }
            if size > best_size {
                best_size = size;
                best = comp;
            }
        }
        best
    }
}

const MIN_ROOM: usize = 4;

fn split_rooms(g: &mut Grid, x0: usize, y0: usize, x1: usize, y1: usize, rng: &mut ChaCha8Rng) {
    let (w, h) = (x1 - x0 + 1, y1 - y0 + 1);
    let can_v = w >= 2 * MIN_ROOM + 1;
    let can_h = h >= 2 * MIN_ROOM + 1;
    if !can_v && !can_h {
        furnish(g, x0, y0, x1, y1, rng);
        return;
    }
    let vertical = match (can_v, can_h) {
        (true, true) => {
            if w > h + h / 2 {
                true
            } else if h > w + w / 2 {
                false
            } else {
                rng.gen_bool(0.5)
            }
        }
        (v, _) => v,
    };
    // Wall ends must meet solid wall, never a door.
    let lines: Vec<usize> = if vertical {
        (x0 + MIN_ROOM..=x1 - MIN_ROOM).filter(|&s| g.get(s, y0 - 1) && g.get(s, y1 + 1)).collect()
    } else {
        (y0 + MIN_ROOM..=y1 - MIN_ROOM).filter(|&s| g.get(x0 - 1, s) && g.get(x1 + 1, s)).collect()
    };
    let Some(&s) = lines.choose(rng) else {
        furnish(g, x0, y0, x1, y1, rng);
        return;
    };
    if vertical {
        let door = rng.gen_range(y0..y1);
        for y in y0..=y1 {
            if y != door && y != door + 1 {
                g.set(s, y, true);
            }
        }
        split_rooms(g, x0, y0, s - 1, y1, rng);
        split_rooms(g, s + 1, y0, x1, y1, rng);
    } else {
        let door = rng.gen_range(x0..x1);
        for x in x0..=x1 {
            if x != door && x != door + 1 {
                g.set(x, s, true);
            }
        }
        split_rooms(g, x0, y0, x1, s - 1, rng);
        split_rooms(g, x0, s + 1, x1, y1, rng);
    }
}

/// Occasional single-cell pillar in the interior of a room.
fn furnish(g: &mut Grid, x0: usize, y0: usize, x1: usize, y1: usize, rng: &mut ChaCha8Rng) {
    if x1 - x0 >= 4 && y1 - y0 >= 4 && rng.gen_bool(0.5) {
        let x = rng.gen_range(x0 + 2..=x1 - 2);
        let y = rng.gen_range(y0 + 2..=y1 - 2);
        g.set(x, y, true);
    }
}

fn rooms(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Grid {
    let mut g = Grid::new(w, h, false);
    g.border();
    split_rooms(&mut g, 1, 1, w - 2, h - 2, rng);
    g
}

fn cave(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Grid {
    let mut g = Grid::new(w, h, false);
    for i in 0..w * h {
        g.occ[i] = rng.gen_bool(0.42);
    }
    g.border();
    for _ in 0..4 {
        let mut next = Grid::new(w, h, true);
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let walls = (y - 1..=y + 1)
                    .flat_map(|yy| (x - 1..=x + 1).map(move |xx| (xx, yy)))
                    .filter(|&(xx, yy)| (xx, yy) != (x, y) && g.get(xx, yy))
                    .count();
                next.set(x, y, walls >= 5 || (walls >= 4 && g.get(x, y)));
            }
        }
        g = next;
    }
    g
}

/// Maze of two-cell-wide passages separated by one-cell walls.
fn corridor(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Grid {
    let mut g = Grid::new(w, h, true);
    let (cw, ch) = ((w - 1) / 3, (h - 1) / 3);
    let open = |g: &mut Grid, cx: usize, cy: usize| {
        for dy in 0..2 {
            for dx in 0..2 {
                g.set(1 + 3 * cx + dx, 1 + 3 * cy + dy, false);
            }
        }
    };
    let mut seen = vec![false; cw * ch];
    let mut stack = vec![(0usize, 0usize)];
    seen[0] = true;
    open(&mut g, 0, 0);
    while let Some(&(cx, cy)) = stack.last() {
        let mut next: Vec<(usize, usize)> = Vec::new();
        if cx > 0 {
            next.push((cx - 1, cy));
        }
        if cx + 1 < cw {
            next.push((cx + 1, cy));
        }
        if cy > 0 {
            next.push((cx, cy - 1));
        }
        if cy + 1 < ch {
            next.push((cx, cy + 1));
        }
        next.retain(|&(x, y)| !seen[y * cw + x]);
        let Some(&(nx, ny)) = next.choose(rng) else {
            stack.pop();
            continue;
        };
        seen[ny * cw + nx] = true;
        open(&mut g, nx, ny);
        let (wx, wy) = (1 + 3 * cx.min(nx), 1 + 3 * cy.min(ny));
        if nx != cx {
            g.set(wx + 2, wy, false);
            g.set(wx + 2, wy + 1, false);
        } else {
            g.set(wx, wy + 2, false);
            g.set(wx + 1, wy + 2, false);
        }
        stack.push((nx, ny));
    }
    g
}

fn place_markers(g: &mut Grid, rng: &mut ChaCha8Rng) -> Option<(Cell, Cell)> {
    let keep = g.largest_component();
    for (o, k) in g.occ.iter_mut().zip(&keep) {
        *o = !k;
    }
    let free = g.free_cells();
    if free.len() < 2 {
        return None;
    }
    let min_sep = TARGET_SEPARATION * (g.w as f64).hypot(g.h as f64);
    for _ in 0..64 {
        let start = *free.choose(rng)?;
        let far: Vec<Cell> = free
            .iter()
            .copied()
            .filter(|c| (c.x as f64 - start.x as f64).hypot(c.y as f64 - start.y as f64) >= min_sep)
            .collect();
        if let Some(&target) = far.choose(rng) {
            return Some((start, target));
        }
    }
    None
}

/// One map with start and target, 4-connected, deterministic in `seed`.
pub fn generate_map(style: Style, width: usize, height: usize, seed: u64) -> Result<GroundTruthMap, MapGenError> {
    if width < 10 || height < 10 {
        return Err(MapGenError::TooSmall(width, height));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut g = match style {
            Style::Rooms => rooms(width, height, &mut rng),
            Style::Cave => cave(width, height, &mut rng),
            Style::Corridor => corridor(width, height, &mut rng),
        };
        if let Some((start, target)) = place_markers(&mut g, &mut rng) {
            return Ok(GroundTruthMap::new(width, height, 1.0, g.occ, start, Some(target))
                .expect("generated map satisfies map invariants"));
        }
    }
}

/// Seed of map `index` in a corpus drawn from `seed`.
pub fn map_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64).rotate_left(17) ^ 0x5851_F42D_4C95_7F2D
}

pub fn generate_corpus(
    style: Style,
    width: usize,
    height: usize,
    seed: u64,
    count: usize,
) -> Result<Vec<GroundTruthMap>, MapGenError> {
    (0..count).map(|i| generate_map(style, width, height, map_seed(seed, i))).collect()
}

/// Writes `map_0000.txt`, `map_0001.txt`, ... and returns the paths.
pub fn write_corpus(dir: &Path, maps: &[GroundTruthMap]) -> Result<Vec<PathBuf>, MapGenError> {
    fs::create_dir_all(dir).map_err(|source| MapGenError::Io { path: dir.to_path_buf(), source })?;
    maps.iter()
        .enumerate()
        .map(|(i, m)| {
            let path = dir.join(format!("map_{i:04}.txt"));
            fs::write(&path, m.to_text()).map_err(|source| MapGenError::Io { path: path.clone(), source })?;
            Ok(path)
        })
        .collect()
}

/// Loads every `*.txt` map in `dir`, sorted by file name.
pub fn load_corpus(dir: &Path) -> Result<Vec<(String, GroundTruthMap)>, MapGenError> {
    let io = |source| MapGenError::Io { path: dir.to_path_buf(), source };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(MapGenError::EmptyCorpus(dir.to_path_buf()));
    }
    paths
        .into_iter()
        .map(|path| {
            let text = fs::read_to_string(&path).map_err(|source| MapGenError::Io { path: path.clone(), source })?;
            let map = load_map(&text).map_err(|source| MapGenError::Map { path: path.clone(), source })?;
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((name, map))
        })
        .collect()
}

pub fn occupancy(map: &GroundTruthMap) -> f64 {
    map.occupied_count() as f64 / (map.width() * map.height()) as f64
}
