//! Pretraining and the recurrent training-prediction loop.
//!
//! A model is first pretrained on random window/target pairs drawn from the
//! training set. It then follows one trajectory point by point: once more
//! than `start_gate` points are known, every new point triggers `iterations`
//! retraining steps on random pairs from the trajectory's own history,
//! followed by a two-step prediction from the most recent window.
//!
//! Normalization statistics during the online phase come from the known
//! prefix only, so a prediction at step `t` depends on points `1..=t` alone.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{Dataset, GeoPoint, Trajectory};
use crate::metrics::RecordErrors;
use crate::optim::{AdamState, TrainConfig};
use crate::predictor::{PredictorError, PredictorModel};
use crate::preprocess::{NormStats, PreprocessError};
use crate::seed::mix;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("trajectory `{uav_id}` has {len} points, at least {min} required")]
    TrajectoryTooShort { uav_id: String, len: usize, min: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("insufficient history: t = {t}, predictions start after t = {gate}")]
    InsufficientHistory { t: usize, gate: usize },
    #[error("invalid engine configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub train: TrainConfig,
    /// Predictions are made once more than this many points are known.
    pub start_gate: usize,
    /// Keep weights and optimizer moments from one online step to the next.
    /// When false, every online step restarts from the pretrained model.
    pub warm_start: bool,
    /// Retrain before every online prediction. When false the pretrained
    /// model is used frozen.
    pub online_retrain: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            start_gate: 16,
            warm_start: true,
            online_retrain: true,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        self.train
            .validate()
            .map_err(|e| EngineError::Config(e.to_string()))?;
        if self.start_gate < self.train.window {
            return Err(EngineError::Config(format!(
                "start_gate {} must be at least the window {}",
                self.start_gate, self.train.window
            )));
        }
        Ok(())
    }

    /// Shortest trajectory usable for pretraining: one full window plus
    /// both targets.
    pub fn min_train_len(&self) -> usize {
        self.train.window + self.train.horizon
    }

    /// Shortest trajectory that yields at least one realized record.
    pub fn min_run_len(&self) -> usize {
        self.start_gate + 1 + self.train.horizon
    }
}

/// A model together with its optimizer state and a train-step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer {
    model: PredictorModel,
    optimizer: Option<AdamState>,
    train_steps: u64,
}

impl Trainer {
    pub fn new(model: PredictorModel) -> Self {
        let optimizer = model.new_optimizer();
        Self {
            model,
            optimizer,
            train_steps: 0,
        }
    }

    /// Resumes from a stored optimizer state; a missing state starts fresh.
    pub fn with_optimizer(model: PredictorModel, optimizer: Option<AdamState>) -> Self {
        let optimizer = optimizer.or_else(|| model.new_optimizer());
        Self {
            model,
            optimizer,
            train_steps: 0,
        }
    }

    pub fn model(&self) -> &PredictorModel {
        &self.model
    }

    pub fn optimizer(&self) -> Option<&AdamState> {
        self.optimizer.as_ref()
    }

    /// Number of `train_step` calls made through this trainer.
    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn into_parts(self) -> (PredictorModel, Option<AdamState>) {
        (self.model, self.optimizer)
    }

    fn check(&self, cfg: &EngineConfig) -> Result<(), EngineError> {
        cfg.validate()?;
        if cfg.train.window != self.model.window() {
            return Err(EngineError::Config(format!(
                "engine window {} does not match model window {}",
                cfg.train.window,
                self.model.window()
            )));
        }
        Ok(())
    }

    fn step(&mut self, window: &[[f64; 3]], targets: &[[f64; 3]], cfg: &TrainConfig) -> Result<f64, EngineError> {
        let opt = self
            .optimizer
            .as_mut()
            .ok_or(PredictorError::KindNotTrainable(self.model.kind()))?;
        let loss = self.model.train_step(window, targets, opt, cfg.lr, cfg.clip_norm)?;
        self.train_steps += 1;
        Ok(loss)
    }
}

/// Pretrains on `train` for `epochs × trajectories × iterations` steps, each
/// on a uniformly drawn window inside one trajectory normalized with that
/// trajectory's own statistics. Returns the per-step loss trace.
pub fn pretrain(trainer: &mut Trainer, train: &Dataset, cfg: &EngineConfig, seed: u64) -> Result<Vec<f64>, EngineError> {
    trainer.check(cfg)?;
    if train.is_empty() {
        return Err(EngineError::EmptyTrainingSet);
    }
    let min = cfg.min_train_len();
    if let Some(t) = train.trajectories.iter().find(|t| t.len() < min) {
        return Err(EngineError::TrajectoryTooShort {
            uav_id: t.uav_id.clone(),
            len: t.len(),
            min,
        });
    }
    if !trainer.model.kind().is_trainable() {
        return Ok(Vec::new());
    }

    let (w, h) = (cfg.train.window, cfg.train.horizon);
    let prepared: Vec<Vec<[f64; 3]>> = train
        .trajectories
        .iter()
        .map(|t| {
            let pos = t.positions();
            NormStats::compute(&pos).map(|s| s.normalize_all(&pos))
        })
        .collect::<Result<_, _>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut losses = Vec::with_capacity(cfg.train.epochs * cfg.train.iterations * prepared.len());
    for _ in 0..cfg.train.epochs {
        for series in &prepared {
            let last_start = series.len() - w - h;
            for _ in 0..cfg.train.iterations {
                let x = rng.random_range(0..=last_start);
                let loss = trainer.step(&series[x..x + w], &series[x + w..x + w + h], &cfg.train)?;
                losses.push(loss);
            }
        }
    }
    Ok(losses)
}

/// Prediction made at step `t` (1-based count of known points) for steps
/// `t+1` and `t+2`, with errors once those points are known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub t: usize,
    pub predicted: [GeoPoint; 2],
    pub realized: Option<[GeoPoint; 2]>,
    pub errors: Option<RecordErrors>,
}

impl PredictionRecord {
    pub fn realize(&mut self, actual: [GeoPoint; 2]) {
        self.errors = Some(RecordErrors::new(&self.predicted, &actual));
        self.realized = Some(actual);
    }
}

/// One online step on the known prefix `history` (points `1..=t`).
///
/// Retraining draws window starts uniformly over every position whose window
/// fits inside the prefix; the targets are the following two points, or only
/// the next one when the window ends one point before `t`.
pub fn recurrent_step(
    trainer: &mut Trainer,
    history: &[GeoPoint],
    cfg: &EngineConfig,
    seed: u64,
) -> Result<PredictionRecord, EngineError> {
    trainer.check(cfg)?;
    let t = history.len();
    if t <= cfg.start_gate {
        return Err(EngineError::InsufficientHistory {
            t,
            gate: cfg.start_gate,
        });
    }
    let (w, h) = (cfg.train.window, cfg.train.horizon);
    let stats = NormStats::compute(history)?;

    if cfg.online_retrain && trainer.model.kind().is_trainable() {
        let series = stats.normalize_all(history);
        let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, t as u64]));
        let last_start = t - w - 1;
        for _ in 0..cfg.train.iterations {
            let x = rng.random_range(0..=last_start);
            let end = (x + w + h).min(t);
            trainer.step(&series[x..x + w], &series[x + w..end], &cfg.train)?;
        }
    }

    let (p1, p2) = trainer.model.predict_window(&history[t - w..], &stats)?;
    Ok(PredictionRecord {
        t,
        predicted: [p1, p2],
        realized: None,
        errors: None,
    })
}

/// Incremental driver of the online loop for one UAV stream.
#[derive(Debug, Clone)]
pub struct OnlineSession {
    trainer: Trainer,
    base: Option<Trainer>,
    cfg: EngineConfig,
    seed: u64,
    history: Vec<GeoPoint>,
    pending: VecDeque<PredictionRecord>,
}

impl OnlineSession {
    pub fn new(trainer: Trainer, cfg: EngineConfig, seed: u64) -> Result<Self, EngineError> {
        trainer.check(&cfg)?;
        let base = (!cfg.warm_start).then(|| trainer.clone());
        Ok(Self {
            trainer,
            base,
            cfg,
            seed,
            history: Vec::new(),
            pending: VecDeque::new(),
        })
    }

    pub fn trainer(&self) -> &Trainer {
        &self.trainer
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    /// Feeds the next point. Returns the records whose two target points are
    /// now both known, with errors filled in, in step order.
    pub fn push(&mut self, point: GeoPoint) -> Result<Vec<PredictionRecord>, EngineError> {
        self.history.push(point);
        let t = self.history.len();
        let mut done = Vec::new();
        while self.pending.front().is_some_and(|r| r.t + 2 <= t) {
            let mut rec = self.pending.pop_front().expect("front checked");
            rec.realize([self.history[rec.t], self.history[rec.t + 1]]);
            done.push(rec);
        }
        if t > self.cfg.start_gate {
            if let Some(base) = &self.base {
                self.trainer = base.clone();
            }
            let rec = recurrent_step(&mut self.trainer, &self.history, &self.cfg, self.seed)?;
            self.pending.push_back(rec);
        }
        Ok(done)
    }

    /// Ends the stream, returning the predictions whose targets never
    /// arrived.
    pub fn finish(self) -> Vec<PredictionRecord> {
        self.pending.into_iter().collect()
    }
}

/// Runs the online loop over a whole trajectory. Records cover every step
/// `t > start_gate`; the last two have no realized errors.
pub fn run_trajectory(
    trainer: &Trainer,
    traj: &Trajectory,
    cfg: &EngineConfig,
    seed: u64,
) -> Result<Vec<PredictionRecord>, EngineError> {
    if traj.len() <= cfg.start_gate {
        return Err(EngineError::InsufficientHistory {
            t: traj.len(),
            gate: cfg.start_gate,
        });
    }
    let min = cfg.min_run_len();
    if traj.len() < min {
        return Err(EngineError::TrajectoryTooShort {
            uav_id: traj.uav_id.clone(),
            len: traj.len(),
            min,
        });
    }
    let mut session = OnlineSession::new(trainer.clone(), cfg.clone(), seed)?;
    let mut records = Vec::new();
    for p in &traj.points {
        records.extend(session.push(p.pos)?);
    }
    records.extend(session.finish());
    Ok(records)
}
