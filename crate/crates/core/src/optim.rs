//! Multi-dimensional MSE loss, Adam, and a central-difference gradient check.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::Parameters;

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("prediction and target lengths differ ({pred} vs {target})")]
    LengthMismatch { pred: usize, target: usize },
    #[error("loss over zero points is undefined")]
    EmptyInput,
    #[error("optimizer state holds {expected} parameters, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("gradient contains a non-finite value")]
    NonFiniteGradient,
    #[error("function returned a non-finite value")]
    NonFiniteValue,
    #[error("invalid optimizer setting: {0}")]
    BadConfig(String),
}

/// Training schedule shared by pretraining and online retraining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Passes over the training set during pretraining.
    pub epochs: usize,
    /// Iterations per trajectory per epoch, and per online step.
    pub iterations: usize,
    pub lr: f64,
    pub window: usize,
    pub horizon: usize,
    /// Global gradient-norm clip; off when `None`.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2,
            iterations: 300,
            lr: 0.01,
            window: 16,
            horizon: 2,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        let bad = |m: &str| Err(OptimError::BadConfig(m.into()));
        if self.epochs < 1 || self.window < 1 {
            return bad("epochs and window must be at least 1");
        }
        if self.horizon != 2 {
            return bad("horizon is fixed at 2");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("learning rate must be positive");
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return bad("clip norm must be positive");
        }
        Ok(())
    }
}

/// `alpha = 1/(3n) Σ_t |pred_t − target_t|²` and its gradient with respect
/// to `pred`.
pub fn mse_loss(pred: &[[f64; 3]], target: &[[f64; 3]]) -> Result<(f64, Vec<[f64; 3]>), OptimError> {
    if pred.len() != target.len() {
        return Err(OptimError::LengthMismatch {
            pred: pred.len(),
            target: target.len(),
        });
    }
    if pred.is_empty() {
        return Err(OptimError::EmptyInput);
    }
    let scale = 1.0 / (3.0 * pred.len() as f64);
    let mut sum = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (p, t) in pred.iter().zip(target) {
        let mut g = [0.0; 3];
        for d in 0..3 {
            let e = p[d] - t[d];
            sum += e * e;
            g[d] = 2.0 * e * scale;
        }
        grad.push(g);
    }
    Ok((sum * scale, grad))
}

/// Adam moments with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        Self::with_hyper(num_params, 0.9, 0.999, 1e-8).expect("default hyperparameters are valid")
    }

    pub fn with_hyper(num_params: usize, beta1: f64, beta2: f64, epsilon: f64) -> Result<Self, OptimError> {
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(OptimError::BadConfig("betas must lie in [0, 1)".into()));
        }
        if !(epsilon > 0.0) {
            return Err(OptimError::BadConfig("epsilon must be positive".into()));
        }
        Ok(Self {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step_count: 0,
            beta1,
            beta2,
            epsilon,
        })
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// One Adam update of `params` using `grads`, which must share the
    /// parameter layout.
    pub fn step<P: Parameters + ?Sized>(&mut self, params: &mut P, grads: &P, lr: f64) -> Result<(), OptimError> {
        let g = grads.to_flat();
        if g.len() != self.m.len() || params.num_params() != self.m.len() {
            return Err(OptimError::ShapeMismatch {
                expected: self.m.len(),
                got: g.len(),
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(OptimError::NonFiniteGradient);
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((m, v), &gi) in self.m.iter_mut().zip(self.v.iter_mut()).zip(&g) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
            *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
        }
        let (m, v, eps) = (&self.m, &self.v, self.epsilon);
        let mut idx = 0;
        params.visit_mut(&mut |slice| {
            for p in slice.iter_mut() {
                let m_hat = m[idx] / bc1;
                let v_hat = v[idx] / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
                idx += 1;
            }
        });
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step<P: Parameters + ?Sized>(
    state: &mut AdamState,
    params: &mut P,
    grads: &P,
    lr: f64,
) -> Result<(), OptimError> {
    state.step(params, grads, lr)
}

/// Scales `grads` in place so its global L2 norm is at most `max_norm`.
pub fn clip_grad_norm<P: Parameters + ?Sized>(grads: &mut P, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    grads.visit(&mut |s| sq += s.iter().map(|v| v * v).sum::<f64>());
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        grads.visit_mut(&mut |s| s.iter_mut().for_each(|v| *v *= k));
    }
    norm
}

/// Compares `analytic` against central differences of `f` at `params`.
///
/// Returns `max_i |a_i − n_i| / max(1, |a_i|, |n_i|)`.
pub fn grad_check<F>(mut f: F, params: &[f64], analytic: &[f64], step: f64) -> Result<f64, OptimError>
where
    F: FnMut(&[f64]) -> f64,
{
    if params.len() != analytic.len() {
        return Err(OptimError::ShapeMismatch {
            expected: params.len(),
            got: analytic.len(),
        });
    }
    if !(step > 0.0) {
        return Err(OptimError::BadConfig("step must be positive".into()));
    }
    let mut x = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + step;
        let up = f(&x);
        x[i] = orig - step;
        let down = f(&x);
        x[i] = orig;
        if !up.is_finite() || !down.is_finite() || !analytic[i].is_finite() {
            return Err(OptimError::NonFiniteValue);
        }
        let numeric = (up - down) / (2.0 * step);
        let err = (analytic[i] - numeric).abs() / 1f64.max(analytic[i].abs()).max(numeric.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}
