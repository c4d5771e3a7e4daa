use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_len, init_bound, Matrix, NnError, Parameters};

/// Vanilla recurrent cell `h' = tanh(Wx·x + Wh·h + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnnCell {
    pub input_weight: Matrix,
    pub hidden_weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RnnCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    h: Vec<f64>,
}

impl RnnCell {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input_weight: Matrix::zeros(hidden, input),
            hidden_weight: Matrix::zeros(hidden, hidden),
            bias: vec![0.0; hidden],
        }
    }

    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut cell = Self::zeros(input, hidden);
        let bound = init_bound(input + hidden);
        cell.input_weight.fill_uniform(rng, bound);
        cell.hidden_weight.fill_uniform(rng, bound);
        cell
    }

    pub fn input_size(&self) -> usize {
        self.input_weight.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.bias.len()
    }

    pub fn forward(&self, x: &[f64], h: &[f64]) -> Result<(Vec<f64>, RnnCache), NnError> {
        check_len(self.input_size(), x.len())?;
        check_len(self.hidden_size(), h.len())?;
        let mut pre = self.bias.clone();
        self.input_weight.matvec_acc(x, &mut pre);
        self.hidden_weight.matvec_acc(h, &mut pre);
        let out: Vec<f64> = pre.iter().map(|v| v.tanh()).collect();
        let cache = RnnCache {
            x: x.to_vec(),
            h_prev: h.to_vec(),
            h: out.clone(),
        };
        Ok((out, cache))
    }

    /// Returns `(∂/∂x, ∂/∂h_prev)`; parameter gradients accumulate in `grads`.
    pub fn backward(&self, cache: RnnCache, dh: &[f64], grads: &mut RnnCell) -> Result<(Vec<f64>, Vec<f64>), NnError> {
        check_len(self.hidden_size(), dh.len())?;
        let dpre: Vec<f64> = dh.iter().zip(&cache.h).map(|(d, h)| d * (1.0 - h * h)).collect();
        grads.input_weight.add_outer(&dpre, &cache.x);
        grads.hidden_weight.add_outer(&dpre, &cache.h_prev);
        for (g, d) in grads.bias.iter_mut().zip(&dpre) {
            *g += d;
        }
        let mut dx = vec![0.0; self.input_size()];
        self.input_weight.matvec_t_acc(&dpre, &mut dx);
        let mut dh_prev = vec![0.0; self.hidden_size()];
        self.hidden_weight.matvec_t_acc(&dpre, &mut dh_prev);
        Ok((dx, dh_prev))
    }
}

impl Parameters for RnnCell {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(self.input_weight.as_slice());
        f(self.hidden_weight.as_slice());
        f(&self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(self.input_weight.as_mut_slice());
        f(self.hidden_weight.as_mut_slice());
        f(&mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_give_zero_state() {
        let cell = RnnCell::zeros(3, 4);
        let (h, _) = cell.forward(&[1.0, 2.0, 3.0], &[0.5; 4]).unwrap();
        assert_eq!(h, vec![0.0; 4]);
    }

    #[test]
    fn identity_recurrence_follows_tanh_series() {
        let mut cell = RnnCell::zeros(3, 4);
        cell.hidden_weight = Matrix::identity(4);
        let h = [0.1, -0.05, 0.02, -0.1];
        let (out, _) = cell.forward(&[7.0, 8.0, 9.0], &h).unwrap();
        for (o, v) in out.iter().zip(h) {
            assert!((o - (v - v.powi(3) / 3.0 + 2.0 * v.powi(5) / 15.0)).abs() < 1e-7);
        }
    }

    #[test]
    fn straight_line_reimplementation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let mut cell = RnnCell::init(3, 5, &mut rng);
            cell.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let h: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (out, _) = cell.forward(&x, &h).unwrap();
            for j in 0..5 {
                let mut a = cell.bias[j];
                for i in 0..3 {
                    a += cell.input_weight.get(j, i) * x[i];
                }
                for i in 0..5 {
                    a += cell.hidden_weight.get(j, i) * h[i];
                }
                assert!((a.tanh() - out[j]).abs() < 1e-12);
            }
        }
    }
}
