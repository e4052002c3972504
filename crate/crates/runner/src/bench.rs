//! Benchmark harness: planners × maps, CSV rows and a summary table.

use std::fmt::Write as _;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use bplan_core::GroundTruthMap;
use rayon::prelude::*;
use serde::Serialize;

use crate::env::{EpisodeConfig, Task};
use crate::episode::{run_episode, Episode, Planner};
use crate::mapgen::map_seed;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub planner: String,
    pub map: String,
    #[serde(serialize_with = "task_name")]
    pub task: Task,
    pub distance_m: f64,
    pub steps: usize,
    pub success: bool,
    pub compute_s: f64,
    #[serde(skip)]
    pub failure: Option<String>,
}

fn task_name<S: serde::Serializer>(t: &Task, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(t.name())
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".to_string())
}

/// One episode per (planner, map), in parallel. Rows come back planner-major
/// in input order; the seed of map `i` is derived from `config.seed` and `i`.
/// Errors and panics become failure rows. `compute_s` is zero unless
/// `record_timing`, which keeps the rows reproducible.
pub fn benchmark(
    planners: &[Planner],
    maps: &[(String, Arc<GroundTruthMap>)],
    config: &EpisodeConfig,
    record_timing: bool,
) -> Vec<BenchRow> {
    let jobs: Vec<(&Planner, usize)> = planners.iter().flat_map(|p| (0..maps.len()).map(move |i| (p, i))).collect();
    jobs.into_par_iter()
        .map(|(planner, i)| {
            let (name, map) = &maps[i];
            let cfg = EpisodeConfig { seed: map_seed(config.seed, i), ..config.clone() };
            let outcome = catch_unwind(AssertUnwindSafe(|| run_episode(map.clone(), planner, &cfg)));
            let result: Result<Episode, String> = match outcome {
                Ok(Ok(ep)) => Ok(ep),
                Ok(Err(e)) => Err(e.to_string()),
                Err(p) => Err(panic_message(p)),
            };
            match result {
                Ok(ep) => BenchRow {
                    planner: planner.name().to_string(),
                    map: name.clone(),
                    task: config.task,
                    distance_m: ep.metrics.distance,
                    steps: ep.metrics.steps,
                    success: ep.metrics.success,
                    compute_s: if record_timing { ep.metrics.compute_s } else { 0.0 },
                    failure: ep.failure,
                },
                Err(e) => BenchRow {
                    planner: planner.name().to_string(),
                    map: name.clone(),
                    task: config.task,
                    distance_m: 0.0,
                    steps: 0,
                    success: false,
                    compute_s: 0.0,
                    failure: Some(e),
                },
            }
        })
        .collect()
}

pub fn write_csv<W: Write>(rows: &[BenchRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerSummary {
    pub planner: String,
    pub episodes: usize,
    pub mean_distance: f64,
    /// Sample standard deviation; zero for a single episode.
    pub std_distance: f64,
    pub mean_steps: f64,
    pub success_rate: f64,
    pub mean_compute_s: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Per-planner aggregates, planners in order of first appearance, rows
/// sorted by map name within each planner.
pub fn summarize(rows: &[BenchRow]) -> Vec<PlannerSummary> {
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.planner.as_str()) {
            order.push(&r.planner);
        }
    }
    order
        .into_iter()
        .map(|p| {
            let mut mine: Vec<&BenchRow> = rows.iter().filter(|r| r.planner == p).collect();
            mine.sort_by(|a, b| a.map.cmp(&b.map));
            let d: Vec<f64> = mine.iter().map(|r| r.distance_m).collect();
            let m = mean(&d);
            let var = if d.len() > 1 { d.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (d.len() - 1) as f64 } else { 0.0 };
            PlannerSummary {
                planner: p.to_string(),
                episodes: mine.len(),
                mean_distance: m,
                std_distance: var.sqrt(),
                mean_steps: mean(&mine.iter().map(|r| r.steps as f64).collect::<Vec<_>>()),
                success_rate: mine.iter().filter(|r| r.success).count() as f64 / mine.len() as f64,
                mean_compute_s: mean(&mine.iter().map(|r| r.compute_s).collect::<Vec<_>>()),
            }
        })
        .collect()
}

pub fn summary_table(summaries: &[PlannerSummary]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<18} {:>8} {:>20} {:>10} {:>9} {:>12}",
        "planner", "episodes", "distance_m", "steps", "success", "compute_s"
    );
    for p in summaries {
        let _ = writeln!(
            s,
            "{:<18} {:>8} {:>20} {:>10.2} {:>8.1}% {:>12.6}",
            p.planner,
            p.episodes,
            format!("{:.2} ± {:.2}", p.mean_distance, p.std_distance),
            p.mean_steps,
            100.0 * p.success_rate,
            p.mean_compute_s
        );
    }
    s
}
