//! Loss values and action-sampling helpers on plain numbers.

use bplan_nn::Mat;
use rand::Rng;

/// `p * ln p` with the limit `0` at `p = 0`.
fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

pub fn entropy(pi: &[f64]) -> f64 {
    -pi.iter().map(|&p| plogp(p)).sum::<f64>()
}

/// `sum_a pi(a) * (q(a) - alpha * ln pi(a))`.
pub fn soft_value(q: &[f64], pi: &[f64], alpha: f64) -> f64 {
    q.iter().zip(pi).map(|(&q, &p)| p * q - alpha * plogp(p)).sum()
}

/// Soft value of the joint (beacon, waypoint) choice, taken as an exact
/// expectation: `sum_b pb(b) * (V_a(b) - alpha * ln pb(b))` where `V_a(b)` is
/// the soft value of row `b` under `pa[b]`.
pub fn hierarchical_soft_value(q: &Mat, pb: &[f64], pa: &[Vec<f64>], alpha: f64) -> f64 {
    pb.iter()
        .enumerate()
        .map(|(b, &p)| {
            let row = q.row(b).to_vec();
            p * soft_value(&row, &pa[b], alpha) - alpha * plogp(p)
        })
        .sum()
}

/// Per-beacon values with the waypoint choice marginalized by `soft_value`.
pub fn beacon_values(q: &Mat, pa: &[Vec<f64>], alpha: f64) -> Vec<f64> {
    (0..q.nrows()).map(|b| soft_value(&q.row(b).to_vec(), &pa[b], alpha)).collect()
}

pub fn td_target(reward: f64, gamma: f64, done: bool, next_value: f64) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * next_value
    }
}

/// Mean squared error between predictions and fixed targets.
pub fn critic_loss(predicted: &[f64], targets: &[f64]) -> f64 {
    assert_eq!(predicted.len(), targets.len());
    predicted.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / predicted.len() as f64
}

/// `sum_a pi(a) * (alpha * ln pi(a) - q(a))`.
pub fn policy_loss(pi: &[f64], q: &[f64], alpha: f64) -> f64 {
    pi.iter().zip(q).map(|(&p, &q)| alpha * plogp(p) - p * q).sum()
}

/// Temperature objective `alpha * (entropy - target)` and its derivative in `alpha`.
pub fn temperature_loss(alpha: f64, entropy: f64, target_entropy: f64) -> (f64, f64) {
    let grad = entropy - target_entropy;
    (alpha * grad, grad)
}

/// Target entropy for a candidate set of `n` actions.
pub fn target_entropy(scale: f64, n: usize) -> f64 {
    scale * (n as f64).ln()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `||f(a+) - f(a)|| - ||f(a-) - f(a)|| + m`, clamped at zero when `clamp`.
pub fn contrastive_loss(anchor: &[f64], positive: &[f64], negative: &[f64], margin: f64, clamp: bool) -> f64 {
    let raw = dist(positive, anchor) - dist(negative, anchor) + margin;
    if clamp {
        raw.max(0.0)
    } else {
        raw
    }
}

/// Index drawn from a categorical distribution.
pub fn sample_index<R: Rng>(pi: &[f64], rng: &mut R) -> usize {
    let total: f64 = pi.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, &p) in pi.iter().enumerate() {
        if u < p {
            return i;
        }
        u -= p;
    }
    pi.iter().rposition(|&p| p > 0.0).unwrap_or(pi.len() - 1)
}

/// First index of the largest value.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Builds `(a, a+, a-)` over one candidate set: `a ~ pi`; `a+` is the argmax of
/// `q` with probability `epsilon`, else of `q_target`; `a-` follows `pi`
/// conditioned on differing from both. `None` when fewer than three candidates.
pub fn build_triplet<R: Rng>(pi: &[f64], q: &[f64], q_target: &[f64], epsilon: f64, rng: &mut R) -> Option<Triplet> {
    if pi.len() < 3 {
        return None;
    }
    let anchor = sample_index(pi, rng);
    let positive = if rng.gen_bool(epsilon) { argmax(q) } else { argmax(q_target) };
    let rest: Vec<f64> = pi.iter().enumerate().map(|(i, &p)| if i == anchor || i == positive { 0.0 } else { p }).collect();
    let negative = if rest.iter().sum::<f64>() > 0.0 {
        sample_index(&rest, rng)
    } else {
        let open: Vec<usize> = (0..pi.len()).filter(|&i| i != anchor && i != positive).collect();
        open[rng.gen_range(0..open.len())]
    };
    Some(Triplet { anchor, positive, negative })
}
