use std::sync::Arc;

use bplan_core::GroundTruthMap;
use bplan_runner::bench::{benchmark, summarize};
use bplan_runner::config::RunConfig;
use bplan_runner::episode::Planner;
use bplan_runner::mapgen::generate_corpus;
use bplan_runner::training::Trainer;

pub const SMOKE_CONFIG: &str = "\
task = exploration
style = rooms
width = 20
height = 20
count = 20
episodes = 500
range = 4
d_th = 2
lattice_cols = 10
lattice_rows = 10
max_steps = 128
d_model = 32
layers = 6
ff = 64
buffer_capacity = 10000
batch = 64
gamma = 0.99
iterations_per_episode = 4
policy_lr = 1e-3
critic_lr = 1e-3
alpha_lr = 1e-3
";

pub const TRAIN_MAP_SEED: u64 = 1;
pub const HELD_OUT_MAP_SEED: u64 = 2;
pub const TRAINER_SEED: u64 = 7;
pub const EVAL_SEED: u64 = 0;

fn corpus(config: &RunConfig, seed: u64, prefix: &str) -> Result<Vec<(String, Arc<GroundTruthMap>)>, String> {
    let maps = generate_corpus(config.style, config.width, config.height, seed, config.count).map_err(|e| e.to_string())?;
    Ok(maps.into_iter().enumerate().map(|(i, m)| (format!("{prefix}{i:02}"), Arc::new(m))).collect())
}

pub fn training_smoke() -> Result<String, String> {
    let config = RunConfig::parse_str(SMOKE_CONFIG).map_err(|e| e.to_string())?;
    let train = corpus(&config, TRAIN_MAP_SEED, "train")?;
    let held = corpus(&config, HELD_OUT_MAP_SEED, "held")?;

    let mut trainer = Trainer::new(config.clone(), TRAINER_SEED).map_err(|e| e.to_string())?;
    let maps: Vec<_> = train.iter().map(|(_, m)| m.clone()).collect();
    trainer.run(&maps, config.episodes, |_| Ok(())).map_err(|e| e.to_string())?;

    let planners = [Planner::Learned(Arc::new(trainer.agent.policy.clone())), Planner::Random, Planner::NearestFrontier];
    let mut eval = config.episode.clone();
    eval.seed = EVAL_SEED;
    let rows = benchmark(&planners, &held, &eval, false);
    let summary = summarize(&rows);
    let mean = |name: &str| summary.iter().find(|s| s.planner == name).map(|s| s.mean_distance).ok_or(format!("no {name} rows"));
    let (learned, random, frontier) = (mean("learned")?, mean("random")?, mean("nearest_frontier")?);
    let detail = format!(
        "learned {learned:.1} m, random {random:.1} m (ratio {:.3}, need <= 0.6), nearest_frontier {frontier:.1} m (ratio {:.3}, need <= 1.15)",
        learned / random,
        learned / frontier
    );
    if learned <= 0.6 * random && learned <= 1.15 * frontier {
        Ok(detail)
    } else {
        Err(detail)
    }
}
