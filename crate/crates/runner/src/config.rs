//! Flat `key = value` run configuration.

use std::path::{Path, PathBuf};

use bplan_core::Lattice;
use bplan_nn::NetConfig;
use bplan_train::TrainerConfig;
use thiserror::Error;

use crate::env::{EpisodeConfig, RewardConfig, Task};
use crate::mapgen::Style;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value `{value}` for `{key}`")]
    Value { line: usize, key: String, value: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub episode: EpisodeConfig,
    pub net: NetConfig,
    pub trainer: TrainerConfig,
    pub style: Style,
    pub width: usize,
    pub height: usize,
    pub count: usize,
    pub episodes: usize,
    pub checkpoint_every: usize,
    /// Stores measured decision times in benchmark output.
    pub record_timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            episode: EpisodeConfig::default(),
            net: NetConfig::default(),
            trainer: TrainerConfig::default(),
            style: Style::Rooms,
            width: 40,
            height: 30,
            count: 20,
            episodes: 500,
            checkpoint_every: 100,
            record_timing: false,
        }
    }
}

fn parse<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Value { line, key: key.to_string(), value: value.to_string() })
}

impl RunConfig {
    /// Applies `key = value` lines on top of the defaults. `#` starts a comment.
    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
            c.set(line, key.trim(), value.trim())?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse_str(&text)
    }

    fn set(&mut self, line: usize, key: &str, v: &str) -> Result<(), ConfigError> {
        let e = &mut self.episode;
        let t = &mut self.trainer;
        match key {
            "task" => {
                e.task = match v {
                    "exploration" => Task::Exploration,
                    "navigation" => Task::Navigation,
                    _ => return Err(ConfigError::Value { line, key: key.into(), value: v.into() }),
                }
            }
            "range" => e.range = parse(line, key, v)?,
            "max_steps" => e.max_steps = parse(line, key, v)?,
            "lattice_cols" => e.lattice = Lattice { cols: parse(line, key, v)?, ..e.lattice },
            "lattice_rows" => e.lattice = Lattice { rows: parse(line, key, v)?, ..e.lattice },
            "k" => e.k = parse(line, key, v)?,
            "d_th" => e.d_th = Some(parse(line, key, v)?),
            "seed" => e.seed = parse(line, key, v)?,
            "step_cost" => e.reward = RewardConfig { step_cost: parse(line, key, v)?, ..e.reward },
            "done_bonus" => e.reward = RewardConfig { done_bonus: parse(line, key, v)?, ..e.reward },
            "d_model" => self.net.d = parse(line, key, v)?,
            "layers" => self.net.layers = parse(line, key, v)?,
            "ff" => self.net.ff = parse(line, key, v)?,
            "clip" => self.net.clip = parse(line, key, v)?,
            "gamma" => t.gamma = parse(line, key, v)?,
            "batch" => t.batch = parse(line, key, v)?,
            "buffer_capacity" => t.buffer_capacity = parse(line, key, v)?,
            "initial_alpha" => t.initial_alpha = parse(line, key, v)?,
            "target_entropy_scale" => t.target_entropy_scale = parse(line, key, v)?,
            "tau" => t.tau = parse(line, key, v)?,
            "margin" => t.margin = parse(line, key, v)?,
            "epsilon" => t.epsilon = parse(line, key, v)?,
            "contrastive_weight" => t.contrastive_weight = parse(line, key, v)?,
            "clamp_contrastive" => t.clamp_contrastive = parse(line, key, v)?,
            "policy_lr" => t.policy_lr = parse(line, key, v)?,
            "critic_lr" => t.critic_lr = parse(line, key, v)?,
            "alpha_lr" => t.alpha_lr = parse(line, key, v)?,
            "iterations_per_episode" => t.iterations_per_episode = parse(line, key, v)?,
            "style" => self.style = v.parse().map_err(|_| ConfigError::Value { line, key: key.into(), value: v.into() })?,
            "width" => self.width = parse(line, key, v)?,
            "height" => self.height = parse(line, key, v)?,
            "count" => self.count = parse(line, key, v)?,
            "episodes" => self.episodes = parse(line, key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse(line, key, v)?,
            "record_timing" => self.record_timing = parse(line, key, v)?,
            _ => return Err(ConfigError::UnknownKey { line, key: key.to_string() }),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let e = &self.episode;
        if e.max_steps == 0 {
            return Err(ConfigError::Invalid("max_steps must be at least 1".into()));
        }
        if !(e.range > 0.0) {
            return Err(ConfigError::Invalid("range must be positive".into()));
        }
        if e.k == 0 || e.lattice.cols == 0 || e.lattice.rows == 0 {
            return Err(ConfigError::Invalid("k and lattice dimensions must be positive".into()));
        }
        if self.width < 10 || self.height < 10 {
            return Err(ConfigError::Invalid("map dimensions must be at least 10x10".into()));
        }
        if self.net.d == 0 || self.net.ff == 0 {
            return Err(ConfigError::Invalid("network widths must be positive".into()));
        }
        self.trainer.validate().map_err(|err| ConfigError::Invalid(err.to_string()))
    }
}
