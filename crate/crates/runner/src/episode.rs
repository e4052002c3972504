//! Running one episode with a learned, random or grid-search planner.

use std::sync::Arc;
use std::time::Instant;

use bplan_core::baselines::{nearest_frontier_step, replan_navigate, FrontierStep, PlanError};
use bplan_core::{BeliefMap, GroundTruthMap, Observation, Point};
use bplan_nn::{NnError, PolicyNet};
use bplan_train::losses::sample_index;
use bplan_train::{select_action, ActMode, Transition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvError, EnvState, EpisodeConfig, Task};

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("planner `{planner}` does not support {task} episodes")]
    Unsupported { planner: &'static str, task: &'static str },
}

/// Chooses a joint (beacon, waypoint) action as positions in the observation's lists.
pub trait DecisionPolicy {
    fn decide(&mut self, obs: &Observation) -> Result<(usize, usize), NnError>;
}

pub struct LearnedPolicy<'a> {
    pub net: &'a PolicyNet,
    pub mode: ActMode,
    pub rng: ChaCha8Rng,
}

impl DecisionPolicy for LearnedPolicy<'_> {
    fn decide(&mut self, obs: &Observation) -> Result<(usize, usize), NnError> {
        select_action(self.net, obs, self.mode, &mut self.rng)
    }
}

/// Uniform choice over beacons and over neighbors.
pub struct RandomPolicy {
    pub rng: ChaCha8Rng,
}

impl DecisionPolicy for RandomPolicy {
    fn decide(&mut self, obs: &Observation) -> Result<(usize, usize), NnError> {
        if obs.beacons.is_empty() {
            return Err(NnError::NoBeacon);
        }
        if obs.neighbors.is_empty() {
            return Err(NnError::NoAction);
        }
        let b = self.rng.gen_range(0..obs.beacons.len());
        let uniform = vec![1.0; obs.neighbors.len()];
        Ok((b, sample_index(&uniform, &mut self.rng)))
    }
}

#[derive(Debug, Clone)]
pub enum Planner {
    /// Greedy decisions of a trained policy.
    Learned(Arc<PolicyNet>),
    NearestFrontier,
    ReplanNavigate,
    Random,
}

impl Planner {
    pub fn name(&self) -> &'static str {
        match self {
            Planner::Learned(_) => "learned",
            Planner::NearestFrontier => "nearest_frontier",
            Planner::ReplanNavigate => "replan_navigate",
            Planner::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    /// Pose after the step.
    pub pose: Point,
    pub beacon: Option<Point>,
    pub waypoint: Point,
    pub reward: f64,
    /// Euclidean length of the traversed segment.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub distance: f64,
    pub steps: usize,
    pub success: bool,
    pub coverage: f64,
    /// Mean decision time per step in seconds.
    pub compute_s: f64,
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub metrics: EpisodeMetrics,
    pub records: Vec<StepRecord>,
    pub start: Point,
    pub target: Option<Point>,
    pub belief: BeliefMap,
    /// Why the episode stopped early, if it did.
    pub failure: Option<String>,
}

fn finish(env: &EnvState, records: Vec<StepRecord>, compute: f64, start: Point, failure: Option<String>) -> Episode {
    let steps = records.len();
    Episode {
        metrics: EpisodeMetrics {
            distance: env.distance,
            steps,
            success: env.success,
            coverage: env.coverage(),
            compute_s: if steps > 0 { compute / steps as f64 } else { 0.0 },
        },
        records,
        start,
        target: env.target.map(|t| t.center(env.cell_size())),
        belief: env.belief.clone(),
        failure,
    }
}

/// Graph-level episode. Every transition goes to `sink`; truncation at the
/// step cap is not terminal.
pub fn run_graph_episode(
    mut env: EnvState,
    policy: &mut dyn DecisionPolicy,
    mut sink: Option<&mut dyn FnMut(Transition)>,
    mut on_step: Option<&mut dyn FnMut(&EnvState)>,
) -> Result<Episode, EpisodeError> {
    let start = env.pose_point();
    let cap = env.config.max_steps;
    let mut records = Vec::new();
    let mut compute = 0.0;
    let mut failure = None;
    if let Some(f) = on_step.as_mut() {
        f(&env);
    }
    let mut obs = Arc::new(env.observation()?);
    while !env.done && records.len() < cap {
        let t0 = Instant::now();
        let decision = policy.decide(&obs);
        compute += t0.elapsed().as_secs_f64();
        let (b, a) = match decision {
            Ok(d) => d,
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        };
        let beacon = env.graph.nodes[obs.beacons[b]].pos;
        let j = obs.neighbors[a];
        let waypoint = env.graph.nodes[j].pos;
        let out = env.step_to_node(j)?;
        let next = Arc::new(env.observation()?);
        let stuck = !out.done && (next.neighbors.is_empty() || next.beacons.is_empty());
        if let Some(s) = sink.as_mut() {
            s(Transition { obs: obs.clone(), beacon: b, waypoint: a, reward: out.reward, next: next.clone(), done: out.done || stuck });
        }
        records.push(StepRecord { t: records.len(), pose: env.pose_point(), beacon: Some(beacon), waypoint, reward: out.reward, distance: out.distance });
        if let Some(f) = on_step.as_mut() {
            f(&env);
        }
        obs = next;
    }
    Ok(finish(&env, records, compute, start, failure))
}

/// Step cap for cell-by-cell planners, scaled to the map.
pub fn grid_step_cap(truth: &GroundTruthMap, max_steps: usize) -> usize {
    max_steps.max(truth.reachable_free_count() * 8)
}

fn frontier_episode(mut env: EnvState) -> Episode {
    let start = env.pose_point();
    let cap = grid_step_cap(&env.truth, env.config.max_steps);
    let cs = env.cell_size();
    let mut records = Vec::new();
    let mut compute = 0.0;
    while !env.done && records.len() < cap {
        let t0 = Instant::now();
        let step = nearest_frontier_step(&env.belief, env.pose);
        compute += t0.elapsed().as_secs_f64();
        let FrontierStep::Move(next) = step else { break };
        let out = env.move_to(next);
        records.push(StepRecord { t: records.len(), pose: env.pose_point(), beacon: None, waypoint: next.center(cs), reward: out.reward, distance: out.distance });
    }
    finish(&env, records, compute, start, None)
}

fn replan_episode(mut env: EnvState) -> Episode {
    let start = env.pose_point();
    let target = env.target.expect("navigation env has a target");
    let cs = env.cell_size();
    let t0 = Instant::now();
    let run = replan_navigate(&env.truth, env.pose, target, env.config.range, None);
    let compute = t0.elapsed().as_secs_f64();
    let mut records = Vec::new();
    let failure = match run {
        Ok(run) => {
            for &c in &run.trajectory[1..] {
                if env.done {
                    break;
                }
                let out = env.move_to(c);
                records.push(StepRecord { t: records.len(), pose: env.pose_point(), beacon: None, waypoint: c.center(cs), reward: out.reward, distance: out.distance });
            }
            None
        }
        Err(PlanError::NoPath(..)) => Some("no path".to_string()),
        Err(e) => Some(e.to_string()),
    };
    finish(&env, records, compute, start, failure)
}

/// Runs `planner` on `truth` from its start. Seeded planners draw from `config.seed`.
pub fn run_episode(truth: Arc<GroundTruthMap>, planner: &Planner, config: &EpisodeConfig) -> Result<Episode, EpisodeError> {
    let env = EnvState::reset(truth, config.clone())?;
    let rng = ChaCha8Rng::seed_from_u64(config.seed);
    match (planner, config.task) {
        (Planner::Learned(net), _) => {
            let mut p = LearnedPolicy { net, mode: ActMode::Greedy, rng };
            run_graph_episode(env, &mut p, None, None)
        }
        (Planner::Random, _) => run_graph_episode(env, &mut RandomPolicy { rng }, None, None),
        (Planner::NearestFrontier, Task::Exploration) => Ok(frontier_episode(env)),
        (Planner::ReplanNavigate, Task::Navigation) => Ok(replan_episode(env)),
        (p, t) => Err(EpisodeError::Unsupported { planner: p.name(), task: t.name() }),
    }
}
