//! Networks, optimizers and the per-iteration update.

use bplan_core::Observation;
use bplan_nn::{Adam, CriticNet, Mat, NetConfig, NnError, ParamError, ParamSet, PolicyNet, Tape};
use rand::Rng;
use thiserror::Error;

use crate::buffer::{ReplayBuffer, Transition};
use crate::losses::{
    argmax, beacon_values, build_triplet, entropy, hierarchical_soft_value, sample_index, target_entropy, td_target,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid trainer config: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("non-finite {0} loss")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub batch: usize,
    pub buffer_capacity: usize,
    pub initial_alpha: f64,
    /// Target entropy is this times `ln |candidates|`, per observation and head.
    pub target_entropy_scale: f64,
    pub tau: f64,
    pub margin: f64,
    /// Probability of taking the positive action from the online critic.
    pub epsilon: f64,
    pub contrastive_weight: f64,
    pub clamp_contrastive: bool,
    pub policy_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub iterations_per_episode: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            batch: 64,
            buffer_capacity: 10_000,
            initial_alpha: 0.2,
            target_entropy_scale: 0.1,
            tau: 0.005,
            margin: 1.0,
            epsilon: 0.5,
            contrastive_weight: 0.1,
            clamp_contrastive: true,
            policy_lr: 1e-4,
            critic_lr: 1e-4,
            alpha_lr: 1e-4,
            iterations_per_episode: 4,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if self.batch == 0 {
            return bad("batch must be at least 1");
        }
        if self.buffer_capacity < self.batch {
            return bad("buffer capacity must be at least the batch size");
        }
        if self.margin < 0.0 {
            return bad("margin must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau must lie in [0, 1]");
        }
        if self.initial_alpha <= 0.0 {
            return bad("initial alpha must be positive");
        }
        Ok(())
    }
}

/// Mean losses of one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub critic: f64,
    pub policy: f64,
    pub temperature: f64,
    pub contrastive: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    /// Not enough transitions for a batch; nothing changed.
    NoOp,
    Trained(LossReport),
}

/// How the acting policy picks among candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Sample,
    Greedy,
}

/// Joint action as positions in `obs.beacons` and `obs.neighbors`.
pub fn select_action<R: Rng>(policy: &PolicyNet, obs: &Observation, mode: ActMode, rng: &mut R) -> Result<(usize, usize), NnError> {
    let d = policy.distributions(obs)?;
    Ok(match mode {
        ActMode::Sample => {
            let b = sample_index(&d.beacon, rng);
            (b, sample_index(&d.waypoint[b], rng))
        }
        ActMode::Greedy => {
            let b = argmax(&d.beacon);
            (b, argmax(&d.waypoint[b]))
        }
    })
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub config: TrainerConfig,
    pub policy: PolicyNet,
    pub critic: CriticNet,
    pub target: CriticNet,
    /// Single `1 x 1` entry holding `ln alpha`.
    pub log_alpha: ParamSet,
    policy_opt: Adam,
    critic_opt: Adam,
    alpha_opt: Adam,
}

impl Agent {
    pub fn new<R: Rng>(net: NetConfig, feature_dim: usize, config: TrainerConfig, rng: &mut R) -> Result<Self, TrainError> {
        config.validate()?;
        let policy = PolicyNet::new(net, feature_dim, rng);
        let critic = CriticNet::new(net, feature_dim, rng);
        let target = critic.clone();
        let mut log_alpha = ParamSet::new();
        log_alpha.add_const("log_alpha", 1, 1, config.initial_alpha.ln());
        Ok(Self {
            policy_opt: Adam::new(&policy.params, config.policy_lr),
            critic_opt: Adam::new(&critic.params, config.critic_lr),
            alpha_opt: Adam::new(&log_alpha, config.alpha_lr),
            config,
            policy,
            critic,
            target,
            log_alpha,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.get(0)[[0, 0]].exp()
    }

    /// Target-network value of the next observation under the current policy.
    fn next_value(&self, next: &Observation, alpha: f64) -> Result<f64, TrainError> {
        let d = self.policy.distributions(next)?;
        let q = self.target.q_values(next)?;
        Ok(hierarchical_soft_value(&q, &d.beacon, &d.waypoint, alpha))
    }

    /// Critic gradient for one transition; returns its squared error and the
    /// pre-update joint values on `t.obs`.
    fn critic_grad(&self, t: &Transition, alpha: f64, grads: &mut [Mat], scale: f64) -> Result<(f64, Mat), TrainError> {
        let next_v = if t.done { 0.0 } else { self.next_value(&t.next, alpha)? };
        let y = td_target(t.reward, self.config.gamma, t.done, next_v);
        let mut tape = Tape::new();
        let p = self.critic.params.bind(&mut tape);
        let q = self.critic.forward(&mut tape, &p, &t.obs)?;
        let qa = tape.element(q, t.beacon, t.waypoint);
        let target = tape.leaf(Mat::from_elem((1, 1), y));
        let diff = tape.sub(qa, target);
        let sq = tape.mul(diff, diff);
        tape.backward(sq).accumulate_params(grads, scale);
        Ok((tape.scalar(sq), tape.value(q).clone()))
    }

    /// Policy (plus contrastive) gradient for one transition. Returns the
    /// policy loss, the contrastive loss if a triplet was built, and the
    /// entropy-minus-target sum over both heads.
    fn policy_grad<R: Rng>(
        &self,
        t: &Transition,
        q: &Mat,
        alpha: f64,
        grads: &mut [Mat],
        scale: f64,
        rng: &mut R,
    ) -> Result<(f64, Option<f64>, f64), TrainError> {
        let cfg = &self.config;
        let mut tape = Tape::new();
        let p = self.policy.params.bind(&mut tape);
        let out = self.policy.forward(&mut tape, &p, &t.obs)?;
        let pb: Vec<f64> = tape.value(out.beacon_logp).iter().map(|v| v.exp()).collect();
        let pa: Vec<Vec<f64>> =
            tape.value(out.waypoint_logp).rows().into_iter().map(|r| r.iter().map(|v| v.exp()).collect()).collect();

        // Beacon head against the waypoint-marginalized values.
        let qb = beacon_values(q, &pa, alpha);
        let beacon_term = expected_objective(&mut tape, out.beacon_logp, &qb, alpha);
        // Waypoint head on the stored beacon row.
        let row_logp = tape.gather(out.waypoint_logp, &[t.beacon]);
        let qa: Vec<f64> = q.row(t.beacon).to_vec();
        let waypoint_term = expected_objective(&mut tape, row_logp, &qa, alpha);
        let mut total = tape.add(beacon_term, waypoint_term);
        let policy_value = tape.scalar(total);

        let mut contrastive = None;
        let q_target = self.target.q_values(&t.obs)?;
        let q_target_row = q_target.row(t.beacon).to_vec();
        if let Some(tr) = build_triplet(&pa[t.beacon], &qa, &q_target_row, cfg.epsilon, rng) {
            let fa = tape.gather(out.candidates, &[tr.anchor]);
            let fp = tape.gather(out.candidates, &[tr.positive]);
            let fneg = tape.gather(out.candidates, &[tr.negative]);
            let dp = tape.sub(fp, fa);
            let dp = tape.row_norm(dp);
            let dn = tape.sub(fneg, fa);
            let dn = tape.row_norm(dn);
            let raw = tape.sub(dp, dn);
            let m = tape.leaf(Mat::from_elem((1, 1), cfg.margin));
            let raw = tape.add(raw, m);
            let c = if cfg.clamp_contrastive { tape.relu(raw) } else { raw };
            contrastive = Some(tape.scalar(c));
            let weighted = tape.scale(c, cfg.contrastive_weight);
            total = tape.add(total, weighted);
        }
        tape.backward(total).accumulate_params(grads, scale);

        let row = &pa[t.beacon];
        let gap = entropy(&pb) - target_entropy(cfg.target_entropy_scale, pb.len()) + entropy(row)
            - target_entropy(cfg.target_entropy_scale, row.len());
        Ok((policy_value, contrastive, gap))
    }

    /// One critic step, one policy step, one temperature step and a target update.
    pub fn train_step<R: Rng>(&mut self, buffer: &ReplayBuffer, rng: &mut R) -> Result<StepOutcome, TrainError> {
        let Some(batch) = buffer.sample(self.config.batch, rng) else {
            return Ok(StepOutcome::NoOp);
        };
        let alpha = self.alpha();
        let scale = 1.0 / batch.len() as f64;

        let mut critic_grads = self.critic.params.zeros_like();
        let mut critic_loss = 0.0;
        let mut values = Vec::with_capacity(batch.len());
        for t in &batch {
            let (l, q) = self.critic_grad(t, alpha, &mut critic_grads, scale)?;
            critic_loss += l * scale;
            values.push(q);
        }

        let mut policy_grads = self.policy.params.zeros_like();
        let (mut policy_loss, mut contrastive_sum, mut contrastive_n, mut gap) = (0.0, 0.0, 0usize, 0.0);
        for (t, q) in batch.iter().zip(&values) {
            let (l, c, g) = self.policy_grad(t, q, alpha, &mut policy_grads, scale, rng)?;
            policy_loss += l * scale;
            gap += g * scale;
            if let Some(c) = c {
                contrastive_sum += c;
                contrastive_n += 1;
            }
        }
        let contrastive = if contrastive_n > 0 { contrastive_sum / contrastive_n as f64 } else { 0.0 };
        let temperature = alpha * gap;

        for (name, v) in [("critic", critic_loss), ("policy", policy_loss), ("temperature", temperature), ("contrastive", contrastive)]
        {
            if !v.is_finite() {
                return Err(TrainError::NonFinite(name));
            }
        }

        self.critic_opt.step(&mut self.critic.params, &critic_grads);
        self.policy_opt.step(&mut self.policy.params, &policy_grads);
        // d/d(ln alpha) of alpha * gap.
        self.alpha_opt.step(&mut self.log_alpha, &[Mat::from_elem((1, 1), alpha * gap)]);
        self.target.params.soft_update_from(&self.critic.params, self.config.tau)?;

        Ok(StepOutcome::Trained(LossReport { critic: critic_loss, policy: policy_loss, temperature, contrastive, alpha }))
    }
}

/// `sum_a pi(a) * (alpha * log pi(a) - q(a))` for a `1 x n` log-probability row,
/// with `q` held constant.
fn expected_objective(tape: &mut Tape, logp: bplan_nn::Var, q: &[f64], alpha: f64) -> bplan_nn::Var {
    let probs = tape.exp(logp);
    let scaled = tape.scale(logp, alpha);
    let qv = tape.leaf(Mat::from_shape_vec((1, q.len()), q.to_vec()).expect("row shape"));
    let inner = tape.sub(scaled, qv);
    let weighted = tape.mul(probs, inner);
    tape.sum(weighted)
}

/// `target <- tau * critic + (1 - tau) * target`.
pub fn soft_update_target(critic: &CriticNet, target: &mut CriticNet, tau: f64) -> Result<(), TrainError> {
    target.params.soft_update_from(&critic.params, tau)?;
    Ok(())
}
