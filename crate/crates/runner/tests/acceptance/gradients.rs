use std::rc::Rc;

use bplan_nn::layers::{Attention, CrossLayer, EncoderLayer, LayerNorm, Linear, PairHead, Pointer};
use bplan_nn::{CriticNet, Mat, NetConfig, ParamSet, PolicyNet, Tape, Var};
use crate::nn_fixtures::random_observation;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;
const SEEDS: u64 = 10;

/// Random weights so the scalar objective mixes every output entry.
fn weights(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

/// Weighted sum of `outputs` against fixed random weights.
fn objective(t: &mut Tape, outputs: &[Var], seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let mut total: Option<Var> = None;
    for &o in outputs {
        let (r, c) = t.value(o).dim();
        let w = t.leaf(weights(&mut rng, r, c));
        let m = t.mul(o, w);
        let s = t.sum(m);
        total = Some(match total {
            Some(acc) => t.add(acc, s),
            None => s,
        });
    }
    total.expect("at least one output")
}

/// Worst per-tensor relative error `|a - n| / max(|a|, |n|)` in the 2-norm.
fn check(params: &ParamSet, seed: u64, build: &dyn Fn(&mut Tape, &[Var]) -> Vec<Var>) -> f64 {
    let eval = |ps: &ParamSet| {
        let mut t = Tape::new();
        let p = ps.bind(&mut t);
        let outs = build(&mut t, &p);
        let root = objective(&mut t, &outs, seed);
        (t, root)
    };
    let (t, root) = eval(params);
    let mut analytic = params.zeros_like();
    t.backward(root).accumulate_params(&mut analytic, 1.0);

    let mut ps = params.clone();
    let mut worst: f64 = 0.0;
    for slot in 0..params.len() {
        let mut numeric = Mat::zeros(params.get(slot).raw_dim());
        for idx in 0..numeric.len() {
            let (r, c) = (idx / numeric.ncols(), idx % numeric.ncols());
            let orig = ps.get(slot)[[r, c]];
            ps.get_mut(slot)[[r, c]] = orig + STEP;
            let (tp, rp) = eval(&ps);
            ps.get_mut(slot)[[r, c]] = orig - STEP;
            let (tm, rm) = eval(&ps);
            ps.get_mut(slot)[[r, c]] = orig;
            numeric[[r, c]] = (tp.scalar(rp) - tm.scalar(rm)) / (2.0 * STEP);
        }
        let a = &analytic[slot];
        let diff = (a - &numeric).mapv(|v| v * v).sum().sqrt();
        let scale = a.mapv(|v| v * v).sum().sqrt().max(numeric.mapv(|v| v * v).sum().sqrt());
        let rel = if scale == 0.0 { 0.0 } else { diff / scale };
        worst = worst.max(rel);
    }
    worst
}

/// Random mask with an open diagonal.
fn mask(rng: &mut ChaCha8Rng, n: usize) -> Rc<Vec<bool>> {
    Rc::new((0..n * n).map(|k| k / n != k % n && rng.gen_bool(0.4)).collect())
}

fn linear_and_layer_norm() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        let lin = Linear::new(&mut ps, "lin", 3, 4, &mut rng);
        let ln = LayerNorm::new(&mut ps, "ln", 4);
        for s in [ln.gain, ln.bias, lin.b] {
            *ps.get_mut(s) = weights(&mut rng, 1, 4);
        }
        let x = weights(&mut rng, 5, 3);
        worst = worst.max(check(&ps, seed, &|t, p| {
            let xv = t.leaf(x.clone());
            let y = lin.forward(t, p, xv);
            vec![y, ln.forward(t, p, y)]
        }));
    }
    worst
}

fn masked_attention_layer() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut ps = ParamSet::new();
        let attn = Attention::new(&mut ps, "attn", 4, &mut rng);
        let m = mask(&mut rng, 6);
        let x = weights(&mut rng, 6, 4);
        let ctx = weights(&mut rng, 3, 4);
        worst = worst.max(check(&ps, seed, &|t, p| {
            let xv = t.leaf(x.clone());
            let cv = t.leaf(ctx.clone());
            let selfa = attn.forward(t, p, xv, xv, Some(m.clone())).unwrap();
            let cross = attn.forward(t, p, xv, cv, None).unwrap();
            vec![selfa, cross]
        }));
    }
    worst
}

fn encoder_and_cross_layers() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let mut ps = ParamSet::new();
        let enc = EncoderLayer::new(&mut ps, "enc", 4, 6, &mut rng);
        let cross = CrossLayer::new(&mut ps, "cross", 4, &mut rng);
        for s in [enc.ff1.b, enc.ff2.b, enc.norm1.gain, enc.norm2.bias, cross.norm.gain] {
            let (r, c) = ps.get(s).dim();
            *ps.get_mut(s) = weights(&mut rng, r, c).mapv(|v| v + 0.5);
        }
        let m = mask(&mut rng, 5);
        let x = weights(&mut rng, 5, 4);
        worst = worst.max(check(&ps, seed, &|t, p| {
            let xv = t.leaf(x.clone());
            let h = enc.forward(t, p, xv, m.clone()).unwrap();
            let q = t.gather(h, &[1, 3]);
            vec![h, cross.forward(t, p, q, h).unwrap()]
        }));
    }
    worst
}

fn pointer_and_pair_head() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let mut ps = ParamSet::new();
        let ptr = Pointer::new(&mut ps, "ptr", 4, 10.0, &mut rng);
        let head = PairHead::new(&mut ps, "head", 4, 5, &mut rng);
        *ps.get_mut(head.b1) = weights(&mut rng, 1, 5);
        let q = weights(&mut rng, 2, 4);
        let c = weights(&mut rng, 3, 4);
        worst = worst.max(check(&ps, seed, &|t, p| {
            let qv = t.leaf(q.clone());
            let cv = t.leaf(c.clone());
            vec![ptr.forward(t, p, qv, cv), head.forward(t, p, qv, cv)]
        }));
    }
    worst
}

fn tiny() -> NetConfig {
    NetConfig { d: 4, layers: 2, ff: 6, clip: 10.0 }
}

fn full_policy_network() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let net = PolicyNet::new(tiny(), 5, &mut rng);
        let obs = random_observation(&mut rng, 6, 5, 3);
        worst = worst.max(check(&net.params, seed, &|t, p| {
            let out = net.forward(t, p, &obs).unwrap();
            vec![out.beacon_logp, out.waypoint_logp, out.candidates]
        }));
    }
    worst
}

fn full_critic_network() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let net = CriticNet::new(tiny(), 8, &mut rng);
        let obs = random_observation(&mut rng, 6, 8, 3);
        worst = worst.max(check(&net.params, seed, &|t, p| vec![net.forward(t, p, &obs).unwrap()]));
    }
    worst
}

pub fn gradient_check() -> Result<String, String> {
    let cases: [(&str, fn() -> f64); 6] = [
        ("linear+layernorm", linear_and_layer_norm),
        ("attention", masked_attention_layer),
        ("encoder+cross", encoder_and_cross_layers),
        ("pointer+pair head", pointer_and_pair_head),
        ("policy net", full_policy_network),
        ("critic net", full_critic_network),
    ];
    let mut report = Vec::new();
    for (name, case) in cases {
        let worst = case();
        if worst >= TOL {
            return Err(format!("{name}: relative error {worst:e}"));
        }
        report.push(format!("{name} {worst:.1e}"));
    }
    Ok(format!("{SEEDS} seeds, max relative error: {}", report.join(", ")))
}
