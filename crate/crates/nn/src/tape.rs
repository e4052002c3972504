//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Values are
//! computed eagerly; [`Tape::backward`] walks the record in reverse and
//! returns the gradient of a scalar root with respect to every node.
//! Parameters enter the tape through [`Tape::param`] and carry the slot
//! index their gradient is reported under.

use std::rc::Rc;

use ndarray::{Array2, Axis, Zip};
use thiserror::Error;

pub type Mat = Array2<f64>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TapeError {
    #[error("attention row {row} has every key masked")]
    DegenerateMask { row: usize },
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    /// `a * b^T`
    MatMulBt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// Adds a `1 x c` row to every row.
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    /// Row softmax; masked entries (`true`) are exactly zero.
    Softmax(Var),
    LogSoftmax(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Mat, inv_std: Vec<f64> },
    Gather(Var, Vec<usize>),
    /// Row `i * n + j` is `a_i + b_j`.
    PairSum(Var, Var),
    Reshape(Var),
    /// `m x 1` column of row Euclidean norms.
    RowNorm(Var),
    Sum(Var),
    Element(Var, usize, usize),
}

struct Node {
    value: Mat,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape(m: &Mat) -> (usize, usize) {
    (m.nrows(), m.ncols())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    /// The single entry of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    /// A constant input; gradients flow into it but are not reported as parameters.
    pub fn leaf(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    /// A parameter whose gradient is reported under `slot`.
    pub fn param(&mut self, value: Mat, slot: usize) -> Var {
        self.push(value, Op::Param(slot))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulBt(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a) * s;
        self.push(v, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::exp);
        self.push(v, Op::Exp(a))
    }

    /// Row softmax. `mask` is row-major with `true` marking excluded entries;
    /// those come out exactly zero. A row with no unmasked entry is an error.
    pub fn softmax(&mut self, a: Var, mask: Option<Rc<Vec<bool>>>) -> Result<Var, TapeError> {
        let x = self.value(a);
        let (r, c) = shape(x);
        let mut out = Mat::zeros((r, c));
        for i in 0..r {
            let allowed = |j: usize| mask.as_ref().is_none_or(|m| !m[i * c + j]);
            let mx = (0..c).filter(|&j| allowed(j)).map(|j| x[[i, j]]).fold(f64::NEG_INFINITY, f64::max);
            if mx == f64::NEG_INFINITY {
                return Err(TapeError::DegenerateMask { row: i });
            }
            let mut sum = 0.0;
            for j in (0..c).filter(|&j| allowed(j)) {
                let e = (x[[i, j]] - mx).exp();
                out[[i, j]] = e;
                sum += e;
            }
            out.row_mut(i).mapv_inplace(|e| e / sum);
        }
        Ok(self.push(out, Op::Softmax(a)))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for mut row in out.rows_mut() {
            let mx = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let lse = mx + row.iter().map(|&x| (x - mx).exp()).sum::<f64>().ln();
            row.mapv_inplace(|x| x - lse);
        }
        self.push(out, Op::LogSoftmax(a))
    }

    /// Row-wise layer normalization with `1 x c` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let c = xv.ncols() as f64;
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / c;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / c;
            let is = 1.0 / (var + eps).sqrt();
            row.mapv_inplace(|v| (v - mean) * is);
            inv_std.push(is);
        }
        let out = &xhat * self.value(gain) + self.value(bias);
        self.push(out, Op::LayerNorm { x, gain, bias, xhat, inv_std })
    }

    pub fn gather(&mut self, a: Var, rows: &[usize]) -> Var {
        let v = self.value(a).select(Axis(0), rows);
        self.push(v, Op::Gather(a, rows.to_vec()))
    }

    pub fn pair_sum(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, n, c) = (av.nrows(), bv.nrows(), av.ncols());
        let mut out = Mat::zeros((m * n, c));
        for i in 0..m {
            for j in 0..n {
                let mut row = out.row_mut(i * n + j);
                row.assign(&av.row(i));
                row += &bv.row(j);
            }
        }
        self.push(out, Op::PairSum(a, b))
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let flat: Vec<f64> = self.value(a).iter().copied().collect();
        let v = Mat::from_shape_vec((rows, cols), flat).expect("reshape preserves element count");
        self.push(v, Op::Reshape(a))
    }

    pub fn row_norm(&mut self, a: Var) -> Var {
        let v = self.value(a).map_axis(Axis(1), |r| r.dot(&r).sqrt()).insert_axis(Axis(1));
        self.push(v, Op::RowNorm(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Mat::from_elem((1, 1), self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn element(&mut self, a: Var, r: usize, c: usize) -> Var {
        let v = Mat::from_elem((1, 1), self.value(a)[[r, c]]);
        self.push(v, Op::Element(a, r, c))
    }

    /// Gradient of the scalar `root` with respect to every node.
    pub fn backward(&self, root: Var) -> Gradients {
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Mat::ones(self.nodes[root.0].value.raw_dim()));
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads, slots: self.nodes.iter().map(|n| if let Op::Param(s) = n.op { Some(s) } else { None }).collect() }
    }

    fn propagate(&self, idx: usize, g: &Mat, grads: &mut [Option<Mat>]) {
        let mut acc = |v: Var, d: Mat| match &mut grads[v.0] {
            Some(existing) => *existing += &d,
            slot @ None => *slot = Some(d),
        };
        let val = |v: Var| &self.nodes[v.0].value;
        match &self.nodes[idx].op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                acc(*a, g.dot(&val(*b).t()));
                acc(*b, val(*a).t().dot(g));
            }
            Op::MatMulBt(a, b) => {
                acc(*a, g.dot(val(*b)));
                acc(*b, g.t().dot(val(*a)));
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, -g);
            }
            Op::Mul(a, b) => {
                acc(*a, g * val(*b));
                acc(*b, g * val(*a));
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                acc(*row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::Scale(a, s) => acc(*a, g * *s),
            Op::Relu(a) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(val(*a)).for_each(|d, &x| {
                    if x <= 0.0 {
                        *d = 0.0
                    }
                });
                acc(*a, d);
            }
            Op::Tanh(_) | Op::Exp(_) => {
                let y = &self.nodes[idx].value;
                let (a, d) = match &self.nodes[idx].op {
                    Op::Tanh(a) => (*a, g * &y.mapv(|t| 1.0 - t * t)),
                    Op::Exp(a) => (*a, g * y),
                    _ => unreachable!(),
                };
                acc(a, d);
            }
            Op::Softmax(a) => {
                let y = &self.nodes[idx].value;
                let mut d = g * y;
                for (mut drow, yrow) in d.rows_mut().into_iter().zip(y.rows()) {
                    let s = drow.sum();
                    Zip::from(&mut drow).and(&yrow).for_each(|dv, &yv| *dv -= yv * s);
                }
                acc(*a, d);
            }
            Op::LogSoftmax(a) => {
                let p = self.nodes[idx].value.mapv(f64::exp);
                let mut d = g.clone();
                for (mut drow, (grow, prow)) in d.rows_mut().into_iter().zip(g.rows().into_iter().zip(p.rows())) {
                    let s = grow.sum();
                    Zip::from(&mut drow).and(&prow).for_each(|dv, &pv| *dv -= pv * s);
                }
                acc(*a, d);
            }
            Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                acc(*bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                acc(*gain, (g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                let dxhat = g * val(*gain);
                let c = xhat.ncols() as f64;
                let mut dx = Mat::zeros(xhat.raw_dim());
                for i in 0..xhat.nrows() {
                    let dr = dxhat.row(i);
                    let xr = xhat.row(i);
                    let s1 = dr.sum();
                    let s2 = dr.dot(&xr);
                    let k = inv_std[i] / c;
                    Zip::from(dx.row_mut(i)).and(&dr).and(&xr).for_each(|o, &d, &xh| *o = k * (c * d - s1 - xh * s2));
                }
                acc(*x, dx);
            }
            Op::Gather(a, rows) => {
                let mut d = Mat::zeros(val(*a).raw_dim());
                for (k, &r) in rows.iter().enumerate() {
                    let mut dst = d.row_mut(r);
                    dst += &g.row(k);
                }
                acc(*a, d);
            }
            Op::PairSum(a, b) => {
                let (m, n) = (val(*a).nrows(), val(*b).nrows());
                let mut da = Mat::zeros(val(*a).raw_dim());
                let mut db = Mat::zeros(val(*b).raw_dim());
                for i in 0..m {
                    for j in 0..n {
                        let gr = g.row(i * n + j);
                        let mut ra = da.row_mut(i);
                        ra += &gr;
                        let mut rb = db.row_mut(j);
                        rb += &gr;
                    }
                }
                acc(*a, da);
                acc(*b, db);
            }
            Op::Reshape(a) => {
                let dim = val(*a).raw_dim();
                let flat: Vec<f64> = g.iter().copied().collect();
                acc(*a, Mat::from_shape_vec(dim, flat).expect("reshape preserves element count"));
            }
            Op::RowNorm(a) => {
                let x = val(*a);
                let norms = &self.nodes[idx].value;
                let mut d = Mat::zeros(x.raw_dim());
                for i in 0..x.nrows() {
                    let nrm = norms[[i, 0]];
                    if nrm > 0.0 {
                        let k = g[[i, 0]] / nrm;
                        Zip::from(d.row_mut(i)).and(x.row(i)).for_each(|o, &xv| *o = k * xv);
                    }
                }
                acc(*a, d);
            }
            Op::Sum(a) => acc(*a, Mat::from_elem(val(*a).raw_dim(), g[[0, 0]])),
            Op::Element(a, r, c) => {
                let mut d = Mat::zeros(val(*a).raw_dim());
                d[[*r, *c]] = g[[0, 0]];
                acc(*a, d);
            }
        }
    }
}

/// Per-node gradients from one backward pass.
pub struct Gradients {
    grads: Vec<Option<Mat>>,
    slots: Vec<Option<usize>>,
}

impl Gradients {
    pub fn of(&self, v: Var) -> Option<&Mat> {
        self.grads[v.0].as_ref()
    }

    /// Add `scale` times every parameter gradient into `into[slot]`.
    pub fn accumulate_params(&self, into: &mut [Mat], scale: f64) {
        for (g, slot) in self.grads.iter().zip(&self.slots) {
            if let (Some(g), Some(s)) = (g, slot) {
                into[*s].scaled_add(scale, g);
            }
        }
    }
}
