use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    check_len, Dense, DenseCache, LstmCache, LstmCell, LstmState, NnError, Parameters, RnnCache,
    RnnCell,
};

/// Features per time step: normalized (lat, lon, alt).
pub const INPUT_DIM: usize = 3;
/// Two future points of three coordinates each.
pub const OUTPUT_DIM: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetKind {
    Mlp,
    Rnn,
    Lstm,
    BiLstm,
}

/// Architecture descriptor shared by every network kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    /// Input window length in time steps.
    pub window: usize,
    /// Recurrent hidden size.
    pub hidden: usize,
    /// Hidden layer widths of the MLP; its input is `window * 3`.
    pub mlp_hidden: Vec<usize>,
}

impl Default for Arch {
    fn default() -> Self {
        Self {
            window: 16,
            hidden: 16,
            mlp_hidden: vec![100, 100],
        }
    }
}

impl Arch {
    fn validate(&self, kind: NetKind) -> Result<(), NnError> {
        if self.window == 0 {
            return Err(NnError::BadArch("window must be at least 1".into()));
        }
        match kind {
            NetKind::Mlp if self.mlp_hidden.iter().any(|&w| w == 0) => {
                Err(NnError::BadArch("MLP layer widths must be positive".into()))
            }
            NetKind::Rnn | NetKind::Lstm | NetKind::BiLstm if self.hidden == 0 => {
                Err(NnError::BadArch("hidden size must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Width of the regression head input for `kind`.
    pub fn head_input(&self, kind: NetKind) -> usize {
        match kind {
            NetKind::Mlp => *self.mlp_hidden.last().unwrap_or(&(self.window * INPUT_DIM)),
            NetKind::Rnn | NetKind::Lstm => self.hidden,
            NetKind::BiLstm => 2 * self.hidden,
        }
    }
}

/// Layer parameters per network kind. This is the `weights` payload of a
/// checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weights {
    Mlp { layers: Vec<Dense> },
    Rnn { cell: RnnCell, head: Dense },
    Lstm { cell: LstmCell, head: Dense },
    BiLstm { forward: LstmCell, backward: LstmCell, head: Dense },
}

impl Weights {
    fn kind(&self) -> NetKind {
        match self {
            Weights::Mlp { .. } => NetKind::Mlp,
            Weights::Rnn { .. } => NetKind::Rnn,
            Weights::Lstm { .. } => NetKind::Lstm,
            Weights::BiLstm { .. } => NetKind::BiLstm,
        }
    }

    /// `(rows, cols)` of every buffer in visit order; biases are `(n, 1)`.
    fn shapes(&self) -> Vec<(usize, usize)> {
        fn dense(d: &Dense, out: &mut Vec<(usize, usize)>) {
            out.push((d.weight.rows(), d.weight.cols()));
            out.push((d.bias.len(), 1));
        }
        fn lstm(c: &LstmCell, out: &mut Vec<(usize, usize)>) {
            out.push((c.input_size, c.hidden_size));
            for g in [&c.input_gate, &c.forget_gate, &c.output_gate, &c.candidate] {
                out.push((g.weight.rows(), g.weight.cols()));
                out.push((g.bias.len(), 1));
            }
        }
        let mut out = Vec::new();
        match self {
            Weights::Mlp { layers } => layers.iter().for_each(|l| dense(l, &mut out)),
            Weights::Rnn { cell, head } => {
                out.push((cell.input_weight.rows(), cell.input_weight.cols()));
                out.push((cell.hidden_weight.rows(), cell.hidden_weight.cols()));
                out.push((cell.bias.len(), 1));
                dense(head, &mut out);
            }
            Weights::Lstm { cell, head } => {
                lstm(cell, &mut out);
                dense(head, &mut out);
            }
            Weights::BiLstm { forward, backward, head } => {
                lstm(forward, &mut out);
                lstm(backward, &mut out);
                dense(head, &mut out);
            }
        }
        out
    }
}

impl Parameters for Weights {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        match self {
            Weights::Mlp { layers } => layers.iter().for_each(|l| l.visit(f)),
            Weights::Rnn { cell, head } => {
                cell.visit(f);
                head.visit(f);
            }
            Weights::Lstm { cell, head } => {
                cell.visit(f);
                head.visit(f);
            }
            Weights::BiLstm { forward, backward, head } => {
                forward.visit(f);
                backward.visit(f);
                head.visit(f);
            }
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        match self {
            Weights::Mlp { layers } => layers.iter_mut().for_each(|l| l.visit_mut(f)),
            Weights::Rnn { cell, head } => {
                cell.visit_mut(f);
                head.visit_mut(f);
            }
            Weights::Lstm { cell, head } => {
                cell.visit_mut(f);
                head.visit_mut(f);
            }
            Weights::BiLstm { forward, backward, head } => {
                forward.visit_mut(f);
                backward.visit_mut(f);
                head.visit_mut(f);
            }
        }
    }
}

static NEXT_TOKEN: AtomicU64 = AtomicU64::new(1);

fn fresh_token() -> u64 {
    NEXT_TOKEN.fetch_add(1, Ordering::Relaxed)
}

/// A sequence-to-two-points regression network.
///
/// Every mutation of the parameters issues a new token; caches record the
/// token they were produced under, and [`Network::backward`] rejects a cache
/// whose token no longer matches.
#[derive(Debug, Clone)]
pub struct Network {
    arch: Arch,
    weights: Weights,
    token: u64,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch && self.weights == other.weights
    }
}

/// Intermediate activations of one [`Network::forward`] call.
#[derive(Debug)]
pub struct SeqCache {
    token: u64,
    steps: CacheSteps,
}

#[derive(Debug)]
enum CacheSteps {
    Mlp {
        layers: Vec<DenseCache>,
        activations: Vec<Vec<f64>>,
    },
    Rnn {
        cells: Vec<RnnCache>,
        head: DenseCache,
    },
    Lstm {
        cells: Vec<LstmCache>,
        head: DenseCache,
    },
    BiLstm {
        forward: Vec<LstmCache>,
        backward: Vec<LstmCache>,
        head: DenseCache,
    },
}

impl Network {
    /// Seeded initialization: weights uniform in ±1/√fan_in, biases zero,
    /// LSTM forget-gate biases one.
    pub fn init(kind: NetKind, arch: &Arch, seed: u64) -> Result<Self, NnError> {
        arch.validate(kind)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = arch.hidden;
        let weights = match kind {
            NetKind::Mlp => {
                let mut widths = vec![arch.window * INPUT_DIM];
                widths.extend(&arch.mlp_hidden);
                widths.push(OUTPUT_DIM);
                let layers = widths
                    .windows(2)
                    .map(|w| Dense::init(w[1], w[0], &mut rng))
                    .collect();
                Weights::Mlp { layers }
            }
            NetKind::Rnn => Weights::Rnn {
                cell: RnnCell::init(INPUT_DIM, h, &mut rng),
                head: Dense::init(OUTPUT_DIM, h, &mut rng),
            },
            NetKind::Lstm => Weights::Lstm {
                cell: LstmCell::init(INPUT_DIM, h, &mut rng),
                head: Dense::init(OUTPUT_DIM, h, &mut rng),
            },
            NetKind::BiLstm => Weights::BiLstm {
                forward: LstmCell::init(INPUT_DIM, h, &mut rng),
                backward: LstmCell::init(INPUT_DIM, h, &mut rng),
                head: Dense::init(OUTPUT_DIM, 2 * h, &mut rng),
            },
        };
        Ok(Self {
            arch: arch.clone(),
            weights,
            token: fresh_token(),
        })
    }

    /// Rebuilds a network from stored weights, checking every buffer shape
    /// against what `arch` implies.
    pub fn from_weights(arch: &Arch, weights: Weights) -> Result<Self, NnError> {
        let template = Self::init(weights.kind(), arch, 0)?;
        if template.weights.shapes() != weights.shapes() {
            return Err(NnError::BadArch(
                "stored weight shapes do not match the architecture".into(),
            ));
        }
        let mut finite = true;
        weights.visit(&mut |s| finite &= s.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(NnError::NonFinite);
        }
        Ok(Self {
            arch: arch.clone(),
            weights,
            token: fresh_token(),
        })
    }

    /// Same architecture, all parameters zero. Used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    pub fn kind(&self) -> NetKind {
        self.weights.kind()
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    /// Mutable access to the layers; invalidates outstanding caches.
    pub fn weights_mut(&mut self) -> &mut Weights {
        self.token = fresh_token();
        &mut self.weights
    }

    pub fn head_input_width(&self) -> usize {
        self.arch.head_input(self.kind())
    }

    /// Runs the window through the network and returns the six regression
    /// outputs. Recurrent kinds start from a zero state.
    pub fn forward(&self, window: &[[f64; INPUT_DIM]]) -> Result<([f64; OUTPUT_DIM], SeqCache), NnError> {
        if window.len() != self.arch.window {
            return Err(NnError::WindowSizeMismatch {
                expected: self.arch.window,
                got: window.len(),
            });
        }
        let (out, steps) = match &self.weights {
            Weights::Mlp { layers } => {
                let mut x: Vec<f64> = window.iter().flatten().copied().collect();
                let mut caches = Vec::with_capacity(layers.len());
                let mut activations = Vec::with_capacity(layers.len().saturating_sub(1));
                for (idx, layer) in layers.iter().enumerate() {
                    let (y, cache) = layer.forward(&x)?;
                    caches.push(cache);
                    if idx + 1 < layers.len() {
                        let a: Vec<f64> = y.iter().map(|v| v.tanh()).collect();
                        activations.push(a.clone());
                        x = a;
                    } else {
                        x = y;
                    }
                }
                (
                    x,
                    CacheSteps::Mlp {
                        layers: caches,
                        activations,
                    },
                )
            }
            Weights::Rnn { cell, head } => {
                let mut h = vec![0.0; cell.hidden_size()];
                let mut cells = Vec::with_capacity(window.len());
                for x in window {
                    let (next, cache) = cell.forward(x, &h)?;
                    cells.push(cache);
                    h = next;
                }
                let (y, head_cache) = head.forward(&h)?;
                (y, CacheSteps::Rnn { cells, head: head_cache })
            }
            Weights::Lstm { cell, head } => {
                let (state, cells) = run_lstm(cell, window.iter())?;
                let (y, head_cache) = head.forward(&state.h)?;
                (y, CacheSteps::Lstm { cells, head: head_cache })
            }
            Weights::BiLstm { forward, backward, head } => {
                let (fs, fwd) = run_lstm(forward, window.iter())?;
                let (bs, bwd) = run_lstm(backward, window.iter().rev())?;
                let mut joined = fs.h;
                joined.extend_from_slice(&bs.h);
                let (y, head_cache) = head.forward(&joined)?;
                (
                    y,
                    CacheSteps::BiLstm {
                        forward: fwd,
                        backward: bwd,
                        head: head_cache,
                    },
                )
            }
        };
        check_len(OUTPUT_DIM, out.len())?;
        let mut fixed = [0.0; OUTPUT_DIM];
        fixed.copy_from_slice(&out);
        Ok((
            fixed,
            SeqCache {
                token: self.token,
                steps,
            },
        ))
    }

    /// Gradient of `upstream · output` with respect to every parameter,
    /// accumulated through time for recurrent kinds.
    pub fn backward(&self, cache: SeqCache, upstream: &[f64; OUTPUT_DIM]) -> Result<Network, NnError> {
        if cache.token != self.token {
            return Err(NnError::StaleCache);
        }
        let mut grads = self.zeros_like();
        match (&self.weights, &mut grads.weights, cache.steps) {
            (Weights::Mlp { layers }, Weights::Mlp { layers: g }, CacheSteps::Mlp { layers: caches, activations }) => {
                let mut dy = upstream.to_vec();
                for (idx, (cache, layer)) in caches.into_iter().zip(layers).enumerate().rev() {
                    let dx = layer.backward(cache, &dy, &mut g[idx])?;
                    dy = if idx > 0 {
                        dx.iter()
                            .zip(&activations[idx - 1])
                            .map(|(d, a)| d * (1.0 - a * a))
                            .collect()
                    } else {
                        dx
                    };
                }
            }
            (
                Weights::Rnn { cell, head },
                Weights::Rnn { cell: gc, head: gh },
                CacheSteps::Rnn { cells, head: hc },
            ) => {
                let mut dh = head.backward(hc, upstream, gh)?;
                for c in cells.into_iter().rev() {
                    dh = cell.backward(c, &dh, gc)?.1;
                }
            }
            (
                Weights::Lstm { cell, head },
                Weights::Lstm { cell: gc, head: gh },
                CacheSteps::Lstm { cells, head: hc },
            ) => {
                let dh = head.backward(hc, upstream, gh)?;
                backprop_lstm(cell, cells, dh, gc)?;
            }
            (
                Weights::BiLstm { forward, backward, head },
                Weights::BiLstm { forward: gf, backward: gb, head: gh },
                CacheSteps::BiLstm { forward: fc, backward: bc, head: hc },
            ) => {
                let mut dh = head.backward(hc, upstream, gh)?;
                let dh_b = dh.split_off(forward.hidden_size);
                backprop_lstm(forward, fc, dh, gf)?;
                backprop_lstm(backward, bc, dh_b, gb)?;
            }
            _ => return Err(NnError::StaleCache),
        }
        Ok(grads)
    }
}

fn run_lstm<'a>(
    cell: &LstmCell,
    inputs: impl Iterator<Item = &'a [f64; INPUT_DIM]>,
) -> Result<(LstmState, Vec<LstmCache>), NnError> {
    let mut state = LstmState::zeros(cell.hidden_size);
    let mut caches = Vec::new();
    for x in inputs {
        let (next, cache) = cell.forward(x, &state)?;
        caches.push(cache);
        state = next;
    }
    Ok((state, caches))
}

fn backprop_lstm(cell: &LstmCell, caches: Vec<LstmCache>, dh_last: Vec<f64>, grads: &mut LstmCell) -> Result<(), NnError> {
    let mut dh = dh_last;
    let mut dc = vec![0.0; cell.hidden_size];
    for cache in caches.into_iter().rev() {
        let (_, dh_prev, dc_prev) = cell.backward(cache, &dh, &dc, grads)?;
        dh = dh_prev;
        dc = dc_prev;
    }
    Ok(())
}

impl Parameters for Network {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.weights.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.token = fresh_token();
        self.weights.visit_mut(f);
    }
}
