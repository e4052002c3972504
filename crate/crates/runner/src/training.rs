//! Training loop: sampled rollouts into replay, then gradient steps.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::{Context, Result};
use bplan_core::graph::{EXPLORATION_FEATURES, NAVIGATION_FEATURES};
use bplan_core::GroundTruthMap;
use bplan_nn::PolicyNet;
use bplan_train::{ActMode, Agent, ReplayBuffer, StepOutcome, Transition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::env::{EnvState, EpisodeConfig, Task};
use crate::episode::{run_graph_episode, LearnedPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainLogRow {
    pub step: usize,
    pub critic_loss: f64,
    pub policy_loss: f64,
    pub temp_loss: f64,
    pub contrastive_loss: f64,
    pub alpha: f64,
    pub buffer_size: usize,
}

pub fn feature_dim(task: Task) -> usize {
    match task {
        Task::Exploration => EXPLORATION_FEATURES,
        Task::Navigation => NAVIGATION_FEATURES,
    }
}

/// Progress after each training episode.
pub struct EpisodeProgress<'a> {
    pub episode: usize,
    pub agent: &'a Agent,
    pub distance: f64,
    pub success: bool,
}

pub struct Trainer {
    pub agent: Agent,
    pub buffer: ReplayBuffer,
    pub log: Vec<TrainLogRow>,
    config: RunConfig,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(config: RunConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let agent = Agent::new(config.net, feature_dim(config.episode.task), config.trainer.clone(), &mut rng)?;
        let buffer = ReplayBuffer::new(config.trainer.buffer_capacity);
        Ok(Self { agent, buffer, log: Vec::new(), config, rng })
    }

    /// One sampled rollout on `map` followed by the configured number of updates.
    pub fn episode(&mut self, map: Arc<GroundTruthMap>) -> Result<(f64, bool)> {
        let cfg = EpisodeConfig { seed: self.rng.gen(), ..self.config.episode.clone() };
        let env = EnvState::reset(map, cfg)?;
        let mut collected: Vec<Transition> = Vec::new();
        let mut sink = |t: Transition| collected.push(t);
        let mut policy =
            LearnedPolicy { net: &self.agent.policy, mode: ActMode::Sample, rng: ChaCha8Rng::seed_from_u64(self.rng.gen()) };
        let ep = run_graph_episode(env, &mut policy, Some(&mut sink), None)?;
        for t in collected {
            self.buffer.push(t);
        }
        for _ in 0..self.config.trainer.iterations_per_episode {
            if let StepOutcome::Trained(r) = self.agent.train_step(&self.buffer, &mut self.rng)? {
                self.log.push(TrainLogRow {
                    step: self.log.len(),
                    critic_loss: r.critic,
                    policy_loss: r.policy,
                    temp_loss: r.temperature,
                    contrastive_loss: r.contrastive,
                    alpha: r.alpha,
                    buffer_size: self.buffer.len(),
                });
            }
        }
        Ok((ep.metrics.distance, ep.metrics.success))
    }

    /// Runs `episodes` episodes, cycling through `maps` in order.
    pub fn run(&mut self, maps: &[Arc<GroundTruthMap>], episodes: usize, mut progress: impl FnMut(EpisodeProgress<'_>) -> Result<()>) -> Result<()> {
        anyhow::ensure!(!maps.is_empty(), "training needs at least one map");
        for e in 0..episodes {
            let (distance, success) = self.episode(maps[e % maps.len()].clone())?;
            progress(EpisodeProgress { episode: e + 1, agent: &self.agent, distance, success })?;
        }
        Ok(())
    }
}

pub fn write_log(rows: &[TrainLogRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_policy(policy: &PolicyNet, path: &Path) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    policy.params.save(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Builds a policy with `config` and loads weights from `path`.
pub fn load_policy(config: &RunConfig, path: &Path) -> Result<PolicyNet> {
    let mut net = PolicyNet::new(config.net, feature_dim(config.episode.task), &mut ChaCha8Rng::seed_from_u64(0));
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    net.params.load_into(std::io::BufReader::new(f)).with_context(|| format!("loading {}", path.display()))?;
    Ok(net)
}
