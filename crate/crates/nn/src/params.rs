//! Named parameter storage, initialization, optimizer and checkpoints.

use std::io::{Read, Write};

use ndarray::Array2;
use rand::Rng;
use thiserror::Error;

use crate::tape::{Mat, Tape, Var};

const MAGIC: &[u8; 4] = b"BPCK";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint holds {found} arrays, expected {expected}")]
    Count { expected: usize, found: usize },
    #[error("array {index}: expected `{expected}`, found `{found}`")]
    Name { index: usize, expected: String, found: String },
    #[error("array `{name}`: expected shape {expected:?}, found {found:?}")]
    Shape { name: String, expected: (usize, usize), found: (usize, usize) },
    #[error("malformed manifest")]
    Manifest,
}

/// Ordered list of named matrices. The position of a matrix is its slot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Mat>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    /// Xavier-uniform `rows x cols` matrix.
    pub fn add_xavier<R: Rng>(&mut self, name: impl Into<String>, rows: usize, cols: usize, rng: &mut R) -> usize {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let m = Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound));
        self.add(name, m)
    }

    pub fn add_const(&mut self, name: impl Into<String>, rows: usize, cols: usize, value: f64) -> usize {
        self.add(name, Mat::from_elem((rows, cols), value))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, slot: usize) -> &Mat {
        &self.values[slot]
    }

    pub fn get_mut(&mut self, slot: usize) -> &mut Mat {
        &mut self.values[slot]
    }

    pub fn values(&self) -> &[Mat] {
        &self.values
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Total number of scalar entries.
    pub fn count(&self) -> usize {
        self.values.iter().map(|m| m.len()).sum()
    }

    pub fn zeros_like(&self) -> Vec<Mat> {
        self.values.iter().map(|m| Mat::zeros(m.raw_dim())).collect()
    }

    /// Pushes every parameter onto `tape`; the returned vector is indexed by slot.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.values.iter().enumerate().map(|(s, m)| tape.param(m.clone(), s)).collect()
    }

    fn check_layout(&self, other: &ParamSet) -> Result<(), ParamError> {
        if self.len() != other.len() {
            return Err(ParamError::Count { expected: self.len(), found: other.len() });
        }
        for (i, (a, b)) in self.values.iter().zip(&other.values).enumerate() {
            if self.names[i] != other.names[i] {
                return Err(ParamError::Name { index: i, expected: self.names[i].clone(), found: other.names[i].clone() });
            }
            if a.dim() != b.dim() {
                return Err(ParamError::Shape { name: self.names[i].clone(), expected: a.dim(), found: b.dim() });
            }
        }
        Ok(())
    }

    /// `self <- tau * source + (1 - tau) * self`, elementwise.
    pub fn soft_update_from(&mut self, source: &ParamSet, tau: f64) -> Result<(), ParamError> {
        self.check_layout(source)?;
        for (dst, src) in self.values.iter_mut().zip(&source.values) {
            if tau == 1.0 {
                dst.assign(src);
            } else {
                dst.zip_mut_with(src, |d, &s| *d = tau * s + (1.0 - tau) * *d);
            }
        }
        Ok(())
    }

    /// Writes magic, version, manifest of `(name, rows, cols)` and little-endian data.
    pub fn save<W: Write>(&self, mut w: W) -> Result<(), ParamError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        for (name, m) in self.names.iter().zip(&self.values) {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(m.nrows() as u32).to_le_bytes())?;
            w.write_all(&(m.ncols() as u32).to_le_bytes())?;
        }
        for m in &self.values {
            for v in m.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a checkpoint into a fresh set.
    pub fn read<R: Read>(mut r: R) -> Result<ParamSet, ParamError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(ParamError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(ParamError::Version(version));
        }
        let count = read_u32(&mut r)? as usize;
        let mut manifest = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = read_u32(&mut r)? as usize;
            if len > 4096 {
                return Err(ParamError::Manifest);
            }
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            let name = String::from_utf8(buf).map_err(|_| ParamError::Manifest)?;
            let rows = read_u32(&mut r)? as usize;
            let cols = read_u32(&mut r)? as usize;
            manifest.push((name, rows, cols));
        }
        let mut set = ParamSet::new();
        for (name, rows, cols) in manifest {
            let mut data = Vec::with_capacity(rows * cols);
            let mut b = [0u8; 8];
            for _ in 0..rows * cols {
                r.read_exact(&mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            let m = Mat::from_shape_vec((rows, cols), data).map_err(|_| ParamError::Manifest)?;
            set.add(name, m);
        }
        Ok(set)
    }

    /// Replaces every value from a checkpoint with an identical layout.
    pub fn load_into<R: Read>(&mut self, r: R) -> Result<(), ParamError> {
        let loaded = Self::read(r)?;
        self.check_layout(&loaded)?;
        self.values = loaded.values;
        Ok(())
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, ParamError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Adam with optional global gradient-norm clipping.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_grad_norm: Option<f64>,
    m: Vec<Mat>,
    v: Vec<Mat>,
    t: i32,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_grad_norm: Some(10.0),
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// One descent step; returns the gradient norm before clipping.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Mat]) -> f64 {
        let norm = grads.iter().map(|g| g.iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt();
        let k = match self.max_grad_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (slot, g) in grads.iter().enumerate() {
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            let p = params.get_mut(slot);
            ndarray::Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
                let g = g * k;
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
            });
        }
        norm
    }
}
