//! Building blocks shared by the policy and critic networks.
//!
//! Each layer only stores parameter slots. Forward passes take the tape and
//! the slot-indexed variables produced by [`ParamSet::bind`].

use std::rc::Rc;

use rand::Rng;

use crate::params::ParamSet;
use crate::tape::{Mat, Tape, TapeError, Var};

/// Scaled dot-product attention on already projected queries, keys and values.
/// `mask` is row-major `n x m` with `true` marking forbidden pairs.
pub fn attend(t: &mut Tape, q: Var, k: Var, v: Var, mask: Option<Rc<Vec<bool>>>) -> Result<Var, TapeError> {
    let d = t.value(q).ncols() as f64;
    let scores = t.matmul_bt(q, k);
    let scores = t.scale(scores, 1.0 / d.sqrt());
    let weights = t.softmax(scores, mask)?;
    Ok(t.matmul(weights, v))
}

/// Attention weights and outputs for plain matrices.
pub fn masked_attention(queries: &Mat, keys: &Mat, values: &Mat, mask: &[bool]) -> Result<(Mat, Mat), TapeError> {
    let mut t = Tape::new();
    let (q, k, v) = (t.leaf(queries.clone()), t.leaf(keys.clone()), t.leaf(values.clone()));
    let d = queries.ncols() as f64;
    let scores = t.matmul_bt(q, k);
    let scores = t.scale(scores, 1.0 / d.sqrt());
    let weights = t.softmax(scores, Some(Rc::new(mask.to_vec())))?;
    let out = t.matmul(weights, v);
    Ok((t.value(weights).clone(), t.value(out).clone()))
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
}

impl Linear {
    pub fn new<R: Rng>(ps: &mut ParamSet, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let w = ps.add_xavier(format!("{name}.w"), fan_in, fan_out, rng);
        let b = ps.add_const(format!("{name}.b"), 1, fan_out, 0.0);
        Self { w, b }
    }

    pub fn forward(&self, t: &mut Tape, p: &[Var], x: Var) -> Var {
        let y = t.matmul(x, p[self.w]);
        t.add_row(y, p[self.b])
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: usize,
    pub bias: usize,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new(ps: &mut ParamSet, name: &str, d: usize) -> Self {
        let gain = ps.add_const(format!("{name}.gain"), 1, d, 1.0);
        let bias = ps.add_const(format!("{name}.bias"), 1, d, 0.0);
        Self { gain, bias }
    }

    pub fn forward(&self, t: &mut Tape, p: &[Var], x: Var) -> Var {
        t.layer_norm(x, p[self.gain], p[self.bias], Self::EPS)
    }
}

/// Single-head attention with learned query, key and value projections.
#[derive(Debug, Clone)]
pub struct Attention {
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
}

impl Attention {
    pub fn new<R: Rng>(ps: &mut ParamSet, name: &str, d: usize, rng: &mut R) -> Self {
        Self {
            wq: ps.add_xavier(format!("{name}.wq"), d, d, rng),
            wk: ps.add_xavier(format!("{name}.wk"), d, d, rng),
            wv: ps.add_xavier(format!("{name}.wv"), d, d, rng),
        }
    }

    pub fn forward(
        &self,
        t: &mut Tape,
        p: &[Var],
        queries: Var,
        context: Var,
        mask: Option<Rc<Vec<bool>>>,
    ) -> Result<Var, TapeError> {
        let q = t.matmul(queries, p[self.wq]);
        let k = t.matmul(context, p[self.wk]);
        let v = t.matmul(context, p[self.wv]);
        attend(t, q, k, v, mask)
    }
}

/// Masked self-attention and a feed-forward block, each with residual and layer norm.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub attn: Attention,
    pub norm1: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub norm2: LayerNorm,
}

impl EncoderLayer {
    pub fn new<R: Rng>(ps: &mut ParamSet, name: &str, d: usize, ff: usize, rng: &mut R) -> Self {
        Self {
            attn: Attention::new(ps, &format!("{name}.attn"), d, rng),
            norm1: LayerNorm::new(ps, &format!("{name}.norm1"), d),
            ff1: Linear::new(ps, &format!("{name}.ff1"), d, ff, rng),
            ff2: Linear::new(ps, &format!("{name}.ff2"), ff, d, rng),
            norm2: LayerNorm::new(ps, &format!("{name}.norm2"), d),
        }
    }

    pub fn forward(&self, t: &mut Tape, p: &[Var], x: Var, mask: Rc<Vec<bool>>) -> Result<Var, TapeError> {
        let a = self.attn.forward(t, p, x, x, Some(mask))?;
        let h = t.add(x, a);
        let h = self.norm1.forward(t, p, h);
        let f = self.ff1.forward(t, p, h);
        let f = t.relu(f);
        let f = self.ff2.forward(t, p, f);
        let o = t.add(h, f);
        Ok(self.norm2.forward(t, p, o))
    }
}

/// Unmasked attention from query rows into a context, with residual and layer norm.
#[derive(Debug, Clone)]
pub struct CrossLayer {
    pub attn: Attention,
    pub norm: LayerNorm,
}

impl CrossLayer {
    pub fn new<R: Rng>(ps: &mut ParamSet, name: &str, d: usize, rng: &mut R) -> Self {
        Self { attn: Attention::new(ps, &format!("{name}.attn"), d, rng), norm: LayerNorm::new(ps, &format!("{name}.norm"), d) }
    }

    pub fn forward(&self, t: &mut Tape, p: &[Var], queries: Var, context: Var) -> Result<Var, TapeError> {
        let a = self.attn.forward(t, p, queries, context, None)?;
        let h = t.add(queries, a);
        Ok(self.norm.forward(t, p, h))
    }
}

/// Pointer head: clipped compatibility scores turned into row log-probabilities.
#[derive(Debug, Clone)]
pub struct Pointer {
    pub wq: usize,
    pub wk: usize,
    pub clip: f64,
}

impl Pointer {
    pub fn new<R: Rng>(ps: &mut ParamSet, name: &str, d: usize, clip: f64, rng: &mut R) -> Self {
        Self { wq: ps.add_xavier(format!("{name}.wq"), d, d, rng), wk: ps.add_xavier(format!("{name}.wk"), d, d, rng), clip }
    }

    /// Row `i` holds log-probabilities of every candidate for query `i`.
    pub fn forward(&self, t: &mut Tape, p: &[Var], queries: Var, candidates: Var) -> Var {
        let d = t.value(queries).ncols() as f64;
        let q = t.matmul(queries, p[self.wq]);
        let k = t.matmul(candidates, p[self.wk]);
        let s = t.matmul_bt(q, k);
        let s = t.scale(s, 1.0 / d.sqrt());
        let s = t.tanh(s);
        let s = t.scale(s, self.clip);
        t.log_softmax(s)
    }
}

/// Two-layer head scoring every (row of `a`, row of `b`) pair on their concatenation.
#[derive(Debug, Clone)]
pub struct PairHead {
    pub w1a: usize,
    pub w1b: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

impl PairHead {
    pub fn new<R: Rng>(ps: &mut ParamSet, name: &str, d: usize, hidden: usize, rng: &mut R) -> Self {
        // Split halves of one 2d x hidden matrix so the init matches a layer on the concatenation.
        let bound = (6.0 / (2 * d + hidden) as f64).sqrt();
        let mut half = |ps: &mut ParamSet, part: &str| {
            let m = Mat::from_shape_fn((d, hidden), |_| rng.gen_range(-bound..bound));
            ps.add(format!("{name}.w1{part}"), m)
        };
        let w1a = half(ps, "a");
        let w1b = half(ps, "b");
        let b1 = ps.add_const(format!("{name}.b1"), 1, hidden, 0.0);
        let w2 = ps.add_xavier(format!("{name}.w2"), hidden, 1, rng);
        let b2 = ps.add_const(format!("{name}.b2"), 1, 1, 0.0);
        Self { w1a, w1b, b1, w2, b2 }
    }

    /// `(rows of a) x (rows of b)` score matrix.
    pub fn forward(&self, t: &mut Tape, p: &[Var], a: Var, b: Var) -> Var {
        let (m, n) = (t.value(a).nrows(), t.value(b).nrows());
        let ha = t.matmul(a, p[self.w1a]);
        let hb = t.matmul(b, p[self.w1b]);
        let h = t.pair_sum(ha, hb);
        let h = t.add_row(h, p[self.b1]);
        let h = t.relu(h);
        let q = t.matmul(h, p[self.w2]);
        let q = t.add_row(q, p[self.b2]);
        t.reshape(q, m, n)
    }
}
