use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use bplan_core::baselines::{astar, replan_navigate};
use bplan_core::graph::{aggregate_beacons, sample_viewpoints, Viewpoint};
use bplan_core::{sense_and_update, BeliefMap, Cell, GroundTruthMap, Knowledge, Lattice, Point};
use bplan_nn::layers::masked_attention;
use bplan_nn::Mat;
use bplan_runner::bench::benchmark;
use bplan_runner::env::{EnvState, EpisodeConfig, Task};
use bplan_runner::episode::{run_graph_episode, Planner, RandomPolicy};
use bplan_runner::mapgen::{generate_map, Style};
use bplan_train::losses::{
    build_triplet, contrastive_loss, critic_loss, hierarchical_soft_value, soft_value, temperature_loss,
};
use ndarray::array;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid_oracles::{dijkstra, random_map, touched_cells};

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

const STYLES: [Style; 3] = [Style::Rooms, Style::Cave, Style::Corridor];

pub fn desk_config(task: Task, seed: u64) -> EpisodeConfig {
    EpisodeConfig { task, range: 4.0, d_th: Some(2.0), lattice: Lattice { cols: 10, rows: 10 }, seed, ..Default::default() }
}

fn scaled(p: Point, cs: f64) -> Point {
    Point::new(p.x / cs, p.y / cs)
}

/// Every cell the segment touches satisfies `clear`.
fn clear_segment(a: Point, b: Point, cs: f64, w: usize, h: usize, clear: impl Fn(Cell) -> bool) -> bool {
    touched_cells(scaled(a, cs), scaled(b, cs), w, h).into_iter().all(clear)
}

fn belief_sight(belief: &BeliefMap, a: Point, b: Point) -> bool {
    clear_segment(a, b, belief.cell_size(), belief.width(), belief.height(), |c| belief.get(c) == Knowledge::Free)
}

pub fn graph_soundness() -> Result<String, String> {
    let (mut graphs, mut edges, mut moves) = (0usize, 0usize, 0usize);
    let mut belief_violations = 0usize;
    let mut truth_violations = 0usize;
    for i in 0..100u64 {
        let truth = Arc::new(generate_map(STYLES[i as usize % 3], 20, 20, 9000 + i).map_err(|e| e.to_string())?);
        for task in [Task::Exploration, Task::Navigation] {
            let env = EnvState::reset(truth.clone(), desk_config(task, i)).map_err(|e| e.to_string())?;
            let mut hook = |env: &EnvState| {
                graphs += 1;
                for (a, b) in env.graph.edges() {
                    edges += 1;
                    if !belief_sight(&env.belief, env.graph.nodes[a].pos, env.graph.nodes[b].pos) {
                        belief_violations += 1;
                    }
                }
            };
            let mut policy = RandomPolicy { rng: ChaCha8Rng::seed_from_u64(i) };
            let ep = run_graph_episode(env, &mut policy, None, Some(&mut hook)).map_err(|e| e.to_string())?;
            let mut prev = ep.start;
            for r in &ep.records {
                moves += 1;
                if !clear_segment(prev, r.pose, truth.cell_size(), truth.width(), truth.height(), |c| !truth.is_occupied(c)) {
                    truth_violations += 1;
                }
                prev = r.pose;
            }
        }
    }
    ensure!(belief_violations == 0 && truth_violations == 0, "{belief_violations} belief and {truth_violations} truth LoS violations");
    Ok(format!("{graphs} graphs, {edges} edges, {moves} traversed edges, 0 violations"))
}

fn within(a: &Viewpoint, b: &Viewpoint, d: f64) -> bool {
    a.pos.dist(b.pos) <= d + 1e-9
}

pub fn beacon_cover() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xBEAC);
    let (mut instances, mut beacons) = (0, 0);
    while instances < 1000 {
        let (w, h) = (rng.gen_range(6..=20), rng.gen_range(6..=20));
        let density = rng.gen_range(0.0..0.35);
        let truth: GroundTruthMap = random_map(&mut rng, w, h, density);
        let mut belief = BeliefMap::for_map(&truth);
        let free: Vec<Cell> = truth.cells().filter(|&c| !truth.is_occupied(c)).collect();
        for _ in 0..rng.gen_range(1..4) {
            let at = free[rng.gen_range(0..free.len())];
            sense_and_update(at, &truth, &mut belief, rng.gen_range(2.0..10.0));
        }
        let lattice = Lattice { cols: rng.gen_range(2..=w), rows: rng.gen_range(2..=h) };
        let nodes = sample_viewpoints(&belief, lattice);
        if nodes.is_empty() {
            continue;
        }
        let keep = rng.gen_range(0.1..1.0);
        let u: Vec<usize> = (0..nodes.len()).filter(|_| rng.gen_bool(keep)).collect();
        let d_th = rng.gen_range(0.5..8.0);
        let vb = aggregate_beacons(&u, &nodes, &belief, d_th);
        instances += 1;
        beacons += vb.len();
        let uset: BTreeSet<usize> = u.iter().copied().collect();
        ensure!(vb.iter().all(|b| uset.contains(b)), "instance {instances}: beacon outside U");
        for &v in &u {
            let covered = vb.iter().any(|&b| within(&nodes[v], &nodes[b], d_th) && belief_sight(&belief, nodes[v].pos, nodes[b].pos));
            ensure!(covered, "instance {instances}: node {v} uncovered");
        }
        let mut covered = BTreeSet::new();
        let mut retrace = Vec::new();
        for &v in &u {
            if covered.contains(&v) {
                continue;
            }
            retrace.push(v);
            for &x in &u {
                if within(&nodes[v], &nodes[x], d_th) && belief_sight(&belief, nodes[v].pos, nodes[x].pos) {
                    covered.insert(x);
                }
            }
        }
        ensure!(retrace == vb, "instance {instances}: greedy retrace {retrace:?} != {vb:?}");
    }
    Ok(format!("{instances} instances, {beacons} beacons, cover and retrace exact"))
}

pub fn attention() -> Result<String, String> {
    let q = array![[1.0, 0.0], [0.0, 1.0]];
    let k = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
    let v = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
    let mask = [false, false, true, false, false, false];
    let (w, out) = masked_attention(&q, &k, &v, &mask).map_err(|e| e.to_string())?;
    let s = 1.0 / 2f64.sqrt();
    let z0 = s.exp() + 1.0;
    let z1 = 1.0 + 2.0 * s.exp();
    let ew = [[s.exp() / z0, 1.0 / z0, 0.0], [1.0 / z1, s.exp() / z1, s.exp() / z1]];
    let mut hand_err: f64 = 0.0;
    for i in 0..2 {
        for j in 0..3 {
            hand_err = hand_err.max((w[[i, j]] - ew[i][j]).abs());
        }
        for c in 0..2 {
            let e: f64 = (0..3).map(|j| ew[i][j] * v[[j, c]]).sum();
            hand_err = hand_err.max((out[[i, c]] - e).abs());
        }
    }
    ensure!(hand_err < 1e-9 && w[[0, 2]] == 0.0, "2x3 hand case error {hand_err:e}");

    let mut rng = ChaCha8Rng::seed_from_u64(0xA77);
    let mut worst: f64 = 0.0;
    let mut masked = 0;
    for _ in 0..2000 {
        let (n, m, d) = (rng.gen_range(1..8), rng.gen_range(1..8), rng.gen_range(1..6));
        let mut r = |rows, cols| Mat::from_shape_fn((rows, cols), |_| rng.gen_range(-5.0..5.0));
        let (q, k, v) = (r(n, d), r(m, d), r(m, d));
        let mut mask: Vec<bool> = (0..n * m).map(|_| rng.gen_bool(0.5)).collect();
        for i in 0..n {
            mask[i * m + i % m] = false;
        }
        let (w, _) = masked_attention(&q, &k, &v, &mask).map_err(|e| e.to_string())?;
        for i in 0..n {
            worst = worst.max((w.row(i).sum() - 1.0).abs());
            for j in 0..m {
                if mask[i * m + j] {
                    masked += 1;
                    ensure!(w[[i, j]] == 0.0, "masked weight {} is not exactly zero", w[[i, j]]);
                }
            }
        }
    }
    ensure!(worst <= 1e-6, "row sum deviation {worst:e}");
    Ok(format!("hand case error {hand_err:.1e}; 2000 random cases, max row-sum deviation {worst:.1e}, {masked} masked entries exactly 0"))
}

pub fn loss_identities() -> Result<String, String> {
    const TOL: f64 = 1e-9;
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(0x1D);
    for _ in 0..1000 {
        let n = rng.gen_range(1..8);
        let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let alpha = rng.gen_range(0.0..2.0);
        ensure!(critic_loss(&q, &q) == 0.0, "critic loss nonzero at exact targets");
        let star = rng.gen_range(0..n);
        let onehot: Vec<f64> = (0..n).map(|i| if i == star { 1.0 } else { 0.0 }).collect();
        worst = worst.max((soft_value(&q, &onehot, alpha) - q[star]).abs());
        let qm = Mat::from_shape_fn((1, n), |(_, j)| q[j]);
        worst = worst.max((hierarchical_soft_value(&qm, &[1.0], &[onehot.clone()], alpha) - q[star]).abs());
        let q0 = q[0];
        worst = worst.max((soft_value(&[q0, q0], &[0.5, 0.5], alpha) - (q0 + alpha * 2f64.ln())).abs());
        let (h, target) = (rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0));
        let (_, grad) = temperature_loss(alpha, h, target);
        ensure!(grad.signum() == (h - target).signum(), "temperature gradient sign mismatch at H={h}, target={target}");
        let f: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m = rng.gen_range(0.0..3.0);
        worst = worst.max((contrastive_loss(&f, &f, &f, m, true) - m).abs());
        worst = worst.max((contrastive_loss(&f, &f, &f, m, false) - m).abs());
    }
    ensure!(worst <= TOL, "identity error {worst:e}");
    Ok(format!("1000 random cases, max identity error {worst:.1e}"))
}

pub fn triplet() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x3);
    let mut violations = 0;
    for i in 0..10_000 {
        let n = rng.gen_range(3..12);
        let mut pi: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0f64..1.0).powi(4)).collect();
        if i % 3 == 0 {
            pi[rng.gen_range(0..n)] += 1e6;
        }
        let z: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= z);
        let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let qt: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t = build_triplet(&pi, &q, &qt, 0.5, &mut rng).ok_or("no triplet for >= 3 candidates")?;
        if t.negative == t.anchor || t.negative == t.positive || t.negative >= n {
            violations += 1;
        }
    }
    ensure!(violations == 0, "{violations} violations");
    Ok("10000 triplets, 0 violations".into())
}

pub fn oracle_optimality() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0A);
    let mut pairs = 0;
    for g in 0..50 {
        let truth = random_map(&mut rng, 30, 30, 0.25);
        let reach: Vec<Cell> = truth.cells().filter(|&c| truth.is_reachable(c)).collect();
        for _ in 0..4 {
            let (s, t) = (reach[rng.gen_range(0..reach.len())], reach[rng.gen_range(0..reach.len())]);
            let a = astar(s, t, &truth).map_err(|e| e.to_string())?.cost;
            let d = dijkstra(&|c| !truth.is_occupied(c), 30, 30, s, t).ok_or("oracle found no path")?;
            ensure!(a == d, "grid {g}: astar {a} != dijkstra {d}");
            let run = replan_navigate(&truth, s, t, 5.0, Some(BeliefMap::fully_revealed(&truth))).map_err(|e| e.to_string())?;
            ensure!(run.cost == a, "grid {g}: replan on revealed belief {} != astar {a}", run.cost);
            pairs += 1;
        }
    }
    Ok(format!("50 grids, {pairs} start/goal pairs, astar = dijkstra = revealed replan exactly"))
}

pub fn navigation_success() -> Result<String, String> {
    let maps: Vec<(String, Arc<GroundTruthMap>)> = (0..100u64)
        .map(|i| {
            let (w, h) = [(20, 20), (30, 24), (40, 30)][i as usize % 3];
            let m = generate_map(STYLES[(i / 3) as usize % 3], w, h, 7000 + i).expect("valid dims");
            (format!("nav{i:03}"), Arc::new(m))
        })
        .collect();
    let rows = benchmark(&[Planner::ReplanNavigate], &maps, &desk_config(Task::Navigation, 1), false);
    let ok = rows.iter().filter(|r| r.success).count();
    ensure!(ok == 100, "success {ok}/100; first failure {:?}", rows.iter().find(|r| !r.success));
    Ok(format!("replan_navigate success 100/100 (mean distance {:.1} m)", rows.iter().map(|r| r.distance_m).sum::<f64>() / 100.0))
}

fn bplan(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_bplan")).args(args).output().map_err(|e| e.to_string())?;
    ensure!(out.status.success(), "bplan {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    Ok(())
}

fn pipeline(dir: &Path, run: &str) -> Result<(), String> {
    let p = |s: &str| dir.join(s).to_string_lossy().into_owned();
    let conf = p("run.conf");
    let out = p(run);
    bplan(&["bench", "--config", &conf, "--seed", "5", "--maps", &p("maps"), "--planners", "nearest_frontier,random", "--out", &out])?;
    for (i, m) in ["map_0000", "map_0002"].iter().enumerate() {
        let ep_out = format!("{out}/ep{i}");
        let map = p(&format!("maps/{m}.txt"));
        bplan(&["explore", "--config", &conf, "--seed", "5", "--map", &map, "--planner", "random", "--out", &ep_out])?;
        bplan(&["navigate", "--config", &conf, "--seed", "5", "--map", &map, "--planner", "replan_navigate", "--out", &format!("{ep_out}/nav")])?;
    }
    Ok(())
}

pub fn determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    std::fs::write(d.join("run.conf"), "style = cave\nwidth = 24\nheight = 20\ncount = 4\nrange = 4\nd_th = 2\nlattice_cols = 12\nlattice_rows = 10\n")
        .map_err(|e| e.to_string())?;
    let p = |s: &str| d.join(s).to_string_lossy().into_owned();
    bplan(&["gen-maps", "--config", &p("run.conf"), "--seed", "3", "--out", &p("maps")])?;
    pipeline(d, "a")?;
    pipeline(d, "b")?;
    let files = ["results.csv", "summary.txt", "ep0/trajectory.svg", "ep1/trajectory.svg", "ep0/nav/trajectory.svg", "ep1/nav/trajectory.svg"];
    for f in files {
        let a = std::fs::read(d.join("a").join(f)).map_err(|e| format!("{f}: {e}"))?;
        let b = std::fs::read(d.join("b").join(f)).map_err(|e| format!("{f}: {e}"))?;
        ensure!(a == b, "{f} differs between runs");
    }
    Ok(format!("results.csv, summary.txt and 4 SVG plots byte-identical across two CLI runs"))
}
