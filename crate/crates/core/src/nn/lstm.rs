use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_len, init_bound, sigmoid, Matrix, NnError, Parameters};

/// One gate: weights over the concatenation `[x; h]` plus a bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Gate {
    fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            weight: Matrix::zeros(hidden, input + hidden),
            bias: vec![0.0; hidden],
        }
    }

    fn preactivation(&self, xh: &[f64]) -> Vec<f64> {
        let mut a = self.bias.clone();
        self.weight.matvec_acc(xh, &mut a);
        a
    }

    fn accumulate(&self, da: &[f64], xh: &[f64], grads: &mut Gate, dxh: &mut [f64]) {
        grads.weight.add_outer(da, xh);
        for (g, d) in grads.bias.iter_mut().zip(da) {
            *g += d;
        }
        self.weight.matvec_t_acc(da, dxh);
    }
}

/// LSTM cell with separate input, forget, output and candidate gates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    pub input_size: usize,
    pub hidden_size: usize,
    pub input_gate: Gate,
    pub forget_gate: Gate,
    pub output_gate: Gate,
    pub candidate: Gate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    xh: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmCell {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input_size: input,
            hidden_size: hidden,
            input_gate: Gate::zeros(input, hidden),
            forget_gate: Gate::zeros(input, hidden),
            output_gate: Gate::zeros(input, hidden),
            candidate: Gate::zeros(input, hidden),
        }
    }

    /// Uniform weights in ±1/√(input+hidden), zero biases except the forget
    /// gate, which starts at 1.
    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut cell = Self::zeros(input, hidden);
        let bound = init_bound(input + hidden);
        for gate in cell.gates_mut() {
            gate.weight.fill_uniform(rng, bound);
        }
        cell.forget_gate.bias.fill(1.0);
        cell
    }

    fn gates_mut(&mut self) -> [&mut Gate; 4] {
        [
            &mut self.input_gate,
            &mut self.forget_gate,
            &mut self.output_gate,
            &mut self.candidate,
        ]
    }

    pub fn forward(&self, x: &[f64], state: &LstmState) -> Result<(LstmState, LstmCache), NnError> {
        check_len(self.input_size, x.len())?;
        check_len(self.hidden_size, state.h.len())?;
        check_len(self.hidden_size, state.c.len())?;
        let mut xh = Vec::with_capacity(self.input_size + self.hidden_size);
        xh.extend_from_slice(x);
        xh.extend_from_slice(&state.h);

        let i: Vec<f64> = self.input_gate.preactivation(&xh).into_iter().map(sigmoid).collect();
        let f: Vec<f64> = self.forget_gate.preactivation(&xh).into_iter().map(sigmoid).collect();
        let o: Vec<f64> = self.output_gate.preactivation(&xh).into_iter().map(sigmoid).collect();
        let g: Vec<f64> = self.candidate.preactivation(&xh).into_iter().map(f64::tanh).collect();

        let c: Vec<f64> = (0..self.hidden_size)
            .map(|k| f[k] * state.c[k] + i[k] * g[k])
            .collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h: Vec<f64> = o.iter().zip(&tanh_c).map(|(o, t)| o * t).collect();

        let cache = LstmCache {
            xh,
            c_prev: state.c.clone(),
            i,
            f,
            o,
            g,
            tanh_c,
        };
        Ok((LstmState { h, c }, cache))
    }

    /// Backpropagates `(∂/∂h', ∂/∂c')` through one step. Returns
    /// `(∂/∂x, ∂/∂h, ∂/∂c)` and accumulates parameter gradients in `grads`.
    pub fn backward(
        &self,
        cache: LstmCache,
        dh: &[f64],
        dc: &[f64],
        grads: &mut LstmCell,
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), NnError> {
        let n = self.hidden_size;
        check_len(n, dh.len())?;
        check_len(n, dc.len())?;
        let mut da_i = vec![0.0; n];
        let mut da_f = vec![0.0; n];
        let mut da_o = vec![0.0; n];
        let mut da_g = vec![0.0; n];
        let mut dc_prev = vec![0.0; n];
        for k in 0..n {
            let (i, f, o, g, t) = (cache.i[k], cache.f[k], cache.o[k], cache.g[k], cache.tanh_c[k]);
            let dct = dc[k] + dh[k] * o * (1.0 - t * t);
            da_o[k] = dh[k] * t * o * (1.0 - o);
            da_i[k] = dct * g * i * (1.0 - i);
            da_g[k] = dct * i * (1.0 - g * g);
            da_f[k] = dct * cache.c_prev[k] * f * (1.0 - f);
            dc_prev[k] = dct * f;
        }
        let mut dxh = vec![0.0; self.input_size + n];
        self.input_gate.accumulate(&da_i, &cache.xh, &mut grads.input_gate, &mut dxh);
        self.forget_gate.accumulate(&da_f, &cache.xh, &mut grads.forget_gate, &mut dxh);
        self.output_gate.accumulate(&da_o, &cache.xh, &mut grads.output_gate, &mut dxh);
        self.candidate.accumulate(&da_g, &cache.xh, &mut grads.candidate, &mut dxh);
        let dh_prev = dxh.split_off(self.input_size);
        Ok((dxh, dh_prev, dc_prev))
    }
}

impl Parameters for LstmCell {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        for gate in [&self.input_gate, &self.forget_gate, &self.output_gate, &self.candidate] {
            f(gate.weight.as_slice());
            f(&gate.bias);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for gate in self.gates_mut() {
            f(gate.weight.as_mut_slice());
            f(&mut gate.bias);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn zero_fixed_point() {
        let cell = LstmCell::zeros(3, 4);
        let (s, _) = cell.forward(&[1.0, 2.0, 3.0], &LstmState::zeros(4)).unwrap();
        assert_eq!(s, LstmState::zeros(4));
    }

    #[test]
    fn half_gates_with_unit_cell() {
        let cell = LstmCell::zeros(1, 1);
        let s = LstmState { h: vec![0.0], c: vec![1.0] };
        let (s, _) = cell.forward(&[0.3], &s).unwrap();
        assert_eq!(s.c, vec![0.5]);
        assert!((s.h[0] - 0.23105857863000487).abs() < 1e-15);
    }

    #[test]
    fn straight_line_reimplementation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let mut cell = LstmCell::init(3, 4, &mut rng);
            for g in cell.gates_mut() {
                g.bias.iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
            }
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let h: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (s, _) = cell.forward(&x, &LstmState { h: h.clone(), c: c.clone() }).unwrap();
            let affine = |g: &Gate, j: usize| {
                let mut a = g.bias[j];
                for k in 0..3 {
                    a += g.weight.get(j, k) * x[k];
                }
                for k in 0..4 {
                    a += g.weight.get(j, 3 + k) * h[k];
                }
                a
            };
            for j in 0..4 {
                let ig = sig(affine(&cell.input_gate, j));
                let fg = sig(affine(&cell.forget_gate, j));
                let og = sig(affine(&cell.output_gate, j));
                let cg = affine(&cell.candidate, j).tanh();
                let c_new = fg * c[j] + ig * cg;
                assert!((c_new - s.c[j]).abs() < 1e-12);
                assert!((og * c_new.tanh() - s.h[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn init_scheme() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cell = LstmCell::init(3, 16, &mut rng);
        assert!(cell.forget_gate.bias.iter().all(|&b| b == 1.0));
        assert!(cell.input_gate.bias.iter().all(|&b| b == 0.0));
        let bound = 1.0 / 19f64.sqrt();
        assert!(cell.to_flat_weights().iter().all(|w| w.abs() <= bound));
    }

    impl LstmCell {
        fn to_flat_weights(&self) -> Vec<f64> {
            [&self.input_gate, &self.forget_gate, &self.output_gate, &self.candidate]
                .iter()
                .flat_map(|g| g.weight.as_slice().to_vec())
                .collect()
        }
    }
}
