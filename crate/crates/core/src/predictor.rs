//! The benchmark models behind one prediction interface.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPoint;
use crate::nn::{Arch, NetKind, Network, NnError, Parameters, Weights, OUTPUT_DIM};
use crate::optim::{clip_grad_norm, mse_loss, AdamState, OptimError};
use crate::preprocess::NormStats;

/// Version written into, and required from, checkpoint files.
pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("{0} models have no trainable parameters")]
    KindNotTrainable(ModelKind),
    #[error("expected 1 or 2 targets, got {0}")]
    BadTargets(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mlp,
    Rnn,
    Lstm,
    BiLstm,
    Persistence,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Mlp,
        ModelKind::Rnn,
        ModelKind::Lstm,
        ModelKind::BiLstm,
        ModelKind::Persistence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Rnn => "rnn",
            ModelKind::Lstm => "lstm",
            ModelKind::BiLstm => "bilstm",
            ModelKind::Persistence => "persistence",
        }
    }

    pub fn net_kind(self) -> Option<NetKind> {
        match self {
            ModelKind::Mlp => Some(NetKind::Mlp),
            ModelKind::Rnn => Some(NetKind::Rnn),
            ModelKind::Lstm => Some(NetKind::Lstm),
            ModelKind::BiLstm => Some(NetKind::BiLstm),
            ModelKind::Persistence => None,
        }
    }

    pub fn is_trainable(self) -> bool {
        self.net_kind().is_some()
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown model kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel {
    kind: ModelKind,
    arch: Arch,
    seed: u64,
    net: Option<Network>,
}

impl PredictorModel {
    pub fn new(kind: ModelKind, arch: &Arch, seed: u64) -> Result<Self, PredictorError> {
        let net = match kind.net_kind() {
            Some(nk) => Some(Network::init(nk, arch, seed)?),
            None => {
                if arch.window == 0 {
                    return Err(NnError::BadArch("window must be at least 1".into()).into());
                }
                None
            }
        };
        Ok(Self {
            kind,
            arch: arch.clone(),
            seed,
            net,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn window(&self) -> usize {
        self.arch.window
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn network(&self) -> Option<&Network> {
        self.net.as_ref()
    }

    pub fn network_mut(&mut self) -> Option<&mut Network> {
        self.net.as_mut()
    }

    pub fn num_params(&self) -> usize {
        self.net.as_ref().map_or(0, |n| n.num_params())
    }

    /// Fresh optimizer state sized for this model, `None` for persistence.
    pub fn new_optimizer(&self) -> Option<AdamState> {
        self.net.as_ref().map(|n| AdamState::new(n.num_params()))
    }

    fn check_window(&self, len: usize) -> Result<(), PredictorError> {
        if len != self.arch.window {
            return Err(NnError::WindowSizeMismatch {
                expected: self.arch.window,
                got: len,
            }
            .into());
        }
        Ok(())
    }

    /// Raw six-output prediction from a normalized window. Persistence
    /// repeats the last window point twice.
    pub fn predict_normalized(&self, window: &[[f64; 3]]) -> Result<[f64; OUTPUT_DIM], PredictorError> {
        self.check_window(window.len())?;
        match &self.net {
            Some(net) => Ok(net.forward(window)?.0),
            None => {
                let last = window[window.len() - 1];
                Ok([last[0], last[1], last[2], last[0], last[1], last[2]])
            }
        }
    }

    /// Predicts the next two points in physical units from a raw window.
    pub fn predict_window(&self, window: &[GeoPoint], stats: &NormStats) -> Result<(GeoPoint, GeoPoint), PredictorError> {
        self.check_window(window.len())?;
        if self.net.is_none() {
            let last = window[window.len() - 1];
            return Ok((last, last));
        }
        let normalized = stats.normalize_all(window);
        let out = self.predict_normalized(&normalized)?;
        Ok((
            stats.denormalize(&[out[0], out[1], out[2]]),
            stats.denormalize(&[out[3], out[4], out[5]]),
        ))
    }

    /// Loss over the available targets and its parameter gradient. With one
    /// target only the first predicted point enters the loss.
    pub fn loss_and_grad(&self, window: &[[f64; 3]], targets: &[[f64; 3]]) -> Result<(f64, Network), PredictorError> {
        let net = self.net.as_ref().ok_or(PredictorError::KindNotTrainable(self.kind))?;
        if !(1..=2).contains(&targets.len()) {
            return Err(PredictorError::BadTargets(targets.len()));
        }
        self.check_window(window.len())?;
        let (out, cache) = net.forward(window)?;
        let pred: Vec<[f64; 3]> = (0..targets.len())
            .map(|h| [out[3 * h], out[3 * h + 1], out[3 * h + 2]])
            .collect();
        let (loss, dpred) = mse_loss(&pred, targets)?;
        let mut upstream = [0.0; OUTPUT_DIM];
        for (h, g) in dpred.iter().enumerate() {
            upstream[3 * h..3 * h + 3].copy_from_slice(g);
        }
        Ok((loss, net.backward(cache, &upstream)?))
    }

    /// One forward/backward pass and one Adam update. Returns the loss
    /// before the update.
    pub fn train_step(
        &mut self,
        window: &[[f64; 3]],
        targets: &[[f64; 3]],
        opt: &mut AdamState,
        lr: f64,
        clip_norm: Option<f64>,
    ) -> Result<f64, PredictorError> {
        let (loss, mut grads) = self.loss_and_grad(window, targets)?;
        if let Some(max) = clip_norm {
            clip_grad_norm(&mut grads, max);
        }
        let net = self.net.as_mut().ok_or(PredictorError::KindNotTrainable(self.kind))?;
        opt.step(net, &grads, lr)?;
        Ok(loss)
    }

    pub fn to_checkpoint(&self, optimizer: Option<&AdamState>) -> Checkpoint {
        Checkpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            model_kind: self.kind,
            arch: self.arch.clone(),
            seed: self.seed,
            weights: self.net.as_ref().map(|n| n.weights().clone()),
            optimizer: optimizer.cloned(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<(Self, Option<AdamState>), PredictorError> {
        if ckpt.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(PredictorError::Checkpoint(format!(
                "unsupported schema_version {} (expected {CHECKPOINT_SCHEMA_VERSION})",
                ckpt.schema_version
            )));
        }
        let net = match (ckpt.model_kind.net_kind(), ckpt.weights) {
            (Some(nk), Some(w)) => {
                let net = Network::from_weights(&ckpt.arch, w)?;
                if net.kind() != nk {
                    return Err(PredictorError::Checkpoint(format!(
                        "weights do not belong to a {} model",
                        ckpt.model_kind
                    )));
                }
                Some(net)
            }
            (None, None) => None,
            (Some(_), None) => return Err(PredictorError::Checkpoint("missing weights".into())),
            (None, Some(_)) => {
                return Err(PredictorError::Checkpoint(
                    "persistence checkpoints carry no weights".into(),
                ))
            }
        };
        let model = Self {
            kind: ckpt.model_kind,
            arch: ckpt.arch,
            seed: ckpt.seed,
            net,
        };
        if let Some(opt) = &ckpt.optimizer {
            if opt.len() != model.num_params() || opt.v.len() != opt.m.len() {
                return Err(PredictorError::Checkpoint(
                    "optimizer state does not match the parameter count".into(),
                ));
            }
        }
        Ok((model, ckpt.optimizer))
    }
}

/// On-disk model checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub model_kind: ModelKind,
    pub arch: Arch,
    pub seed: u64,
    pub weights: Option<Weights>,
    /// Adam moments, so a warm start can continue exactly where training
    /// stopped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<AdamState>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String, PredictorError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, PredictorError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), PredictorError> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PredictorError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
