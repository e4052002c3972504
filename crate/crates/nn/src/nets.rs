//! Policy and critic networks over a viewpoint-graph observation.

use std::rc::Rc;

use bplan_core::Observation;
use rand::Rng;
use thiserror::Error;

use crate::layers::{CrossLayer, EncoderLayer, Linear, PairHead, Pointer};
use crate::params::ParamSet;
use crate::tape::{Mat, Tape, TapeError, Var};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NnError {
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error("observation has no beacon to choose from")]
    NoBeacon,
    #[error("current node has no neighbor to move to")]
    NoAction,
    #[error("observation has {found} features per node, network expects {expected}")]
    FeatureDim { expected: usize, found: usize },
    #[error("index {index} out of range for {len} candidates")]
    Index { index: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetConfig {
    /// Embedding width.
    pub d: usize,
    /// Number of encoder layers.
    pub layers: usize,
    /// Hidden width of the encoder feed-forward blocks.
    pub ff: usize,
    /// Pointer logits are `clip * tanh(score)`.
    pub clip: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self { d: 128, layers: 6, ff: 512, clip: 10.0 }
    }
}

/// Embedding followed by masked self-attention layers.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub feature_dim: usize,
    pub embed: Linear,
    pub layers: Vec<EncoderLayer>,
}

impl Encoder {
    fn new<R: Rng>(ps: &mut ParamSet, name: &str, feature_dim: usize, cfg: &NetConfig, rng: &mut R) -> Self {
        let embed = Linear::new(ps, &format!("{name}.embed"), feature_dim, cfg.d, rng);
        let layers = (0..cfg.layers).map(|l| EncoderLayer::new(ps, &format!("{name}.layer{l}"), cfg.d, cfg.ff, rng)).collect();
        Self { feature_dim, embed, layers }
    }

    pub fn forward(&self, t: &mut Tape, p: &[Var], features: &Mat, mask: Rc<Vec<bool>>) -> Result<Var, NnError> {
        if features.ncols() != self.feature_dim {
            return Err(NnError::FeatureDim { expected: self.feature_dim, found: features.ncols() });
        }
        let x = t.leaf(features.clone());
        let mut h = self.embed.forward(t, p, x);
        for layer in &self.layers {
            h = layer.forward(t, p, h, mask.clone())?;
        }
        Ok(h)
    }

    fn forward_obs(&self, t: &mut Tape, p: &[Var], obs: &Observation) -> Result<Var, NnError> {
        self.forward(t, p, &feature_matrix(obs), Rc::new(obs.mask()))
    }
}

pub fn feature_matrix(obs: &Observation) -> Mat {
    Mat::from_shape_vec((obs.len(), obs.feature_dim), obs.features.clone()).expect("feature block is len x feature_dim")
}

fn check_candidates(obs: &Observation) -> Result<(), NnError> {
    if obs.beacons.is_empty() {
        return Err(NnError::NoBeacon);
    }
    if obs.neighbors.is_empty() {
        return Err(NnError::NoAction);
    }
    Ok(())
}

/// Tape handles produced by one policy forward pass.
#[derive(Debug, Clone, Copy)]
pub struct PolicyOut {
    pub encoded: Var,
    /// `1 x beacons` log-probabilities.
    pub beacon_logp: Var,
    /// `beacons x neighbors` waypoint log-probabilities, one row per beacon.
    pub waypoint_logp: Var,
    /// `neighbors x d` decoded candidate features.
    pub candidates: Var,
}

/// Plain-value view of the policy's distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct Distributions {
    pub beacon: Vec<f64>,
    /// `waypoint[b]` is the neighbor distribution given beacon `b`.
    pub waypoint: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct PolicyNet {
    pub config: NetConfig,
    pub params: ParamSet,
    pub encoder: Encoder,
    pub beacon_cross: CrossLayer,
    pub beacon_pointer: Pointer,
    pub waypoint_cross: CrossLayer,
    pub waypoint_pointer: Pointer,
}

impl PolicyNet {
    pub fn new<R: Rng>(config: NetConfig, feature_dim: usize, rng: &mut R) -> Self {
        let mut ps = ParamSet::new();
        let d = config.d;
        let encoder = Encoder::new(&mut ps, "policy.enc", feature_dim, &config, rng);
        let beacon_cross = CrossLayer::new(&mut ps, "policy.beacon.cross", d, rng);
        let beacon_pointer = Pointer::new(&mut ps, "policy.beacon.pointer", d, config.clip, rng);
        let waypoint_cross = CrossLayer::new(&mut ps, "policy.waypoint.cross", d, rng);
        let waypoint_pointer = Pointer::new(&mut ps, "policy.waypoint.pointer", d, config.clip, rng);
        Self { config, params: ps, encoder, beacon_cross, beacon_pointer, waypoint_cross, waypoint_pointer }
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder.feature_dim
    }

    pub fn encode(&self, t: &mut Tape, p: &[Var], features: &Mat, mask: Rc<Vec<bool>>) -> Result<Var, NnError> {
        self.encoder.forward(t, p, features, mask)
    }

    /// Beacon log-probabilities (`1 x beacons`) and the decoded current-node feature.
    pub fn decode_beacon(
        &self,
        t: &mut Tape,
        p: &[Var],
        encoded: Var,
        current: usize,
        beacons: &[usize],
    ) -> Result<(Var, Var), NnError> {
        if beacons.is_empty() {
            return Err(NnError::NoBeacon);
        }
        let hp = t.gather(encoded, &[current]);
        let hp = self.beacon_cross.forward(t, p, hp, encoded)?;
        let hb = t.gather(encoded, beacons);
        Ok((self.beacon_pointer.forward(t, p, hp, hb), hp))
    }

    /// Neighbor log-probabilities for each beacon row (`beacons x neighbors`)
    /// and the decoded candidate features (`neighbors x d`).
    pub fn decode_waypoint(
        &self,
        t: &mut Tape,
        p: &[Var],
        encoded: Var,
        beacons: &[usize],
        neighbors: &[usize],
    ) -> Result<(Var, Var), NnError> {
        if neighbors.is_empty() {
            return Err(NnError::NoAction);
        }
        let hb = t.gather(encoded, beacons);
        let hb = self.waypoint_cross.forward(t, p, hb, encoded)?;
        let ha = t.gather(encoded, neighbors);
        let logp = self.waypoint_pointer.forward(t, p, hb, ha);
        let decoded = self.waypoint_cross.forward(t, p, ha, encoded)?;
        Ok((logp, decoded))
    }

    pub fn forward(&self, t: &mut Tape, p: &[Var], obs: &Observation) -> Result<PolicyOut, NnError> {
        check_candidates(obs)?;
        let encoded = self.encoder.forward_obs(t, p, obs)?;
        let (beacon_logp, _) = self.decode_beacon(t, p, encoded, obs.current, &obs.beacons)?;
        let (waypoint_logp, candidates) = self.decode_waypoint(t, p, encoded, &obs.beacons, &obs.neighbors)?;
        Ok(PolicyOut { encoded, beacon_logp, waypoint_logp, candidates })
    }

    /// Forward pass on a fresh tape, returning plain probabilities.
    pub fn distributions(&self, obs: &Observation) -> Result<Distributions, NnError> {
        let mut t = Tape::new();
        let p = self.params.bind(&mut t);
        let out = self.forward(&mut t, &p, obs)?;
        let beacon = t.value(out.beacon_logp).iter().map(|v| v.exp()).collect();
        let waypoint = t.value(out.waypoint_logp).rows().into_iter().map(|r| r.iter().map(|v| v.exp()).collect()).collect();
        Ok(Distributions { beacon, waypoint })
    }
}

#[derive(Debug, Clone)]
pub struct CriticNet {
    pub config: NetConfig,
    pub params: ParamSet,
    pub encoder: Encoder,
    pub beacon_cross: CrossLayer,
    pub waypoint_cross: CrossLayer,
    pub head: PairHead,
}

impl CriticNet {
    pub fn new<R: Rng>(config: NetConfig, feature_dim: usize, rng: &mut R) -> Self {
        let mut ps = ParamSet::new();
        let d = config.d;
        let encoder = Encoder::new(&mut ps, "critic.enc", feature_dim, &config, rng);
        let beacon_cross = CrossLayer::new(&mut ps, "critic.beacon.cross", d, rng);
        let waypoint_cross = CrossLayer::new(&mut ps, "critic.waypoint.cross", d, rng);
        let head = PairHead::new(&mut ps, "critic.head", d, d, rng);
        Self { config, params: ps, encoder, beacon_cross, waypoint_cross, head }
    }

    /// `beacons x neighbors` matrix of joint action values.
    pub fn forward(&self, t: &mut Tape, p: &[Var], obs: &Observation) -> Result<Var, NnError> {
        check_candidates(obs)?;
        let encoded = self.encoder.forward_obs(t, p, obs)?;
        let hb = t.gather(encoded, &obs.beacons);
        let hb = self.beacon_cross.forward(t, p, hb, encoded)?;
        let ha = t.gather(encoded, &obs.neighbors);
        let ha = self.waypoint_cross.forward(t, p, ha, encoded)?;
        Ok(self.head.forward(t, p, hb, ha))
    }

    /// Every joint action value on a fresh tape.
    pub fn q_values(&self, obs: &Observation) -> Result<Mat, NnError> {
        let mut t = Tape::new();
        let p = self.params.bind(&mut t);
        let q = self.forward(&mut t, &p, obs)?;
        Ok(t.value(q).clone())
    }

    /// Per-candidate values over neighbors for beacon `beacon`.
    pub fn q_row(&self, obs: &Observation, beacon: usize) -> Result<Vec<f64>, NnError> {
        let q = self.q_values(obs)?;
        if beacon >= q.nrows() {
            return Err(NnError::Index { index: beacon, len: q.nrows() });
        }
        Ok(q.row(beacon).to_vec())
    }

    /// Scalar value of the joint action `(beacon, waypoint)`, as positions in
    /// `obs.beacons` and `obs.neighbors`.
    pub fn critic_q(&self, obs: &Observation, beacon: usize, waypoint: usize) -> Result<f64, NnError> {
        let row = self.q_row(obs, beacon)?;
        row.get(waypoint).copied().ok_or(NnError::Index { index: waypoint, len: row.len() })
    }
}
