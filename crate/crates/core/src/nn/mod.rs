//! From-scratch differentiable layers with analytic gradients.
//!
//! Every layer stores its parameters in plain row-major buffers and exposes
//! them through [`Parameters`], so optimizers and gradient checks operate on
//! a flat view without knowing the layer layout. Gradients have the same
//! type as the parameters they differentiate.

mod dense;
mod lstm;
mod network;
mod rnn;

pub use dense::{Dense, DenseCache};
pub use lstm::{Gate, LstmCache, LstmCell, LstmState};
pub use network::{Arch, NetKind, Network, SeqCache, Weights, INPUT_DIM, OUTPUT_DIM};
pub use rnn::{RnnCache, RnnCell};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("window length {got} does not match configured window {expected}")]
    WindowSizeMismatch { expected: usize, got: usize },
    #[error("bad architecture: {0}")]
    BadArch(String),
    #[error("cache does not belong to the current parameters")]
    StaleCache,
    #[error("non-finite parameter value")]
    NonFinite,
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<(), NnError> {
    if expected == got {
        Ok(())
    } else {
        Err(NnError::DimMismatch { expected, got })
    }
}

/// Uniform visitation over every trainable buffer of a parameter set.
///
/// Visit order is fixed per type; flattening two values of the same shape
/// yields aligned vectors.
pub trait Parameters {
    fn visit(&self, f: &mut dyn FnMut(&[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |s| n += s.len());
        n
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(&mut |s| out.extend_from_slice(s));
        out
    }

    /// Overwrites all parameters from `flat`, which must have exactly
    /// [`num_params`](Parameters::num_params) entries.
    fn copy_from_flat(&mut self, flat: &[f64]) -> Result<(), NnError> {
        check_len(self.num_params(), flat.len())?;
        let mut offset = 0;
        self.visit_mut(&mut |s| {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        });
        Ok(())
    }

    fn fill(&mut self, value: f64) {
        self.visit_mut(&mut |s| s.fill(value));
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NnError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_len(cols, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `out += self · x`
    pub(crate) fn matvec_acc(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        for (row, o) in self.data.chunks_exact(self.cols).zip(out.iter_mut()) {
            *o += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    /// `out += selfᵀ · dy`
    pub(crate) fn matvec_t_acc(&self, dy: &[f64], out: &mut [f64]) {
        for (row, &d) in self.data.chunks_exact(self.cols).zip(dy) {
            if d != 0.0 {
                for (o, w) in out.iter_mut().zip(row) {
                    *o += w * d;
                }
            }
        }
    }

    /// `self += u ⊗ v`
    pub(crate) fn add_outer(&mut self, u: &[f64], v: &[f64]) {
        for (row, &a) in self.data.chunks_exact_mut(self.cols).zip(u) {
            if a != 0.0 {
                for (w, b) in row.iter_mut().zip(v) {
                    *w += a * b;
                }
            }
        }
    }

    pub(crate) fn fill_uniform<R: Rng>(&mut self, rng: &mut R, bound: f64) {
        for w in &mut self.data {
            *w = rng.random_range(-bound..=bound);
        }
    }
}

impl Serialize for Matrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Matrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn init_bound(fan_in: usize) -> f64 {
    1.0 / (fan_in as f64).sqrt()
}
