use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_len, init_bound, Matrix, NnError, Parameters};

/// Affine layer `y = W·x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Vec<f64>,
}

impl Dense {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self, NnError> {
        check_len(weight.rows(), bias.len())?;
        if weight.as_slice().iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite);
        }
        Ok(Self { weight, bias })
    }

    pub fn zeros(output: usize, input: usize) -> Self {
        Self {
            weight: Matrix::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    pub fn init<R: Rng>(output: usize, input: usize, rng: &mut R) -> Self {
        let mut d = Self::zeros(output, input);
        d.weight.fill_uniform(rng, init_bound(input));
        d
    }

    pub fn input_size(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_size(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, DenseCache), NnError> {
        check_len(self.input_size(), x.len())?;
        let mut y = self.bias.clone();
        self.weight.matvec_acc(x, &mut y);
        Ok((y, DenseCache { input: x.to_vec() }))
    }

    /// Accumulates parameter gradients into `grads` and returns `∂/∂x`.
    pub fn backward(&self, cache: DenseCache, dy: &[f64], grads: &mut Dense) -> Result<Vec<f64>, NnError> {
        check_len(self.output_size(), dy.len())?;
        check_len(self.input_size(), cache.input.len())?;
        grads.weight.add_outer(dy, &cache.input);
        for (g, d) in grads.bias.iter_mut().zip(dy) {
            *g += d;
        }
        let mut dx = vec![0.0; self.input_size()];
        self.weight.matvec_t_acc(dy, &mut dx);
        Ok(dx)
    }
}

impl Parameters for Dense {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(self.weight.as_slice());
        f(&self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(self.weight.as_mut_slice());
        f(&mut self.bias);
    }
}
