//! Repeated benchmark runs over a train/test split.
//!
//! Every arm is pretrained once per repeat and then driven through the
//! online loop on every test trajectory. Seeds are derived from the base seed,
//! the model name, the repeat index and the trajectory id, so the result of
//! any one (arm, repeat, trajectory) task is independent of scheduling and of
//! which other trajectories are present.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{self, EngineConfig, EngineError, PredictionRecord, Trainer};
use crate::geo::{filter_dataset, Dataset, DatasetRole};
use crate::metrics;
use crate::nn::Arch;
use crate::predictor::{ModelKind, PredictorModel};
use crate::seed::{hash_str, mix};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{0:?} dataset has no trajectories above the length threshold")]
    EmptyDataset(DatasetRole),
    #[error("invalid length thresholds: {0}")]
    InvalidThresholds(String),
    #[error("invalid bench configuration: {0}")]
    InvalidConfig(String),
    #[error("{arm} repeat {repeat}: {source}")]
    Engine {
        arm: String,
        repeat: usize,
        #[source]
        source: EngineError,
    },
}

/// One benchmarked configuration: a model kind, optionally with online
/// retraining disabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Arm {
    pub kind: ModelKind,
    pub frozen: bool,
}

impl Arm {
    pub const fn new(kind: ModelKind) -> Self {
        Self { kind, frozen: false }
    }

    pub const fn frozen(kind: ModelKind) -> Self {
        Self { kind, frozen: true }
    }

    /// The five models plus the frozen LSTM.
    pub fn defaults() -> Vec<Arm> {
        let mut arms: Vec<Arm> = ModelKind::ALL.iter().map(|&k| Arm::new(k)).collect();
        arms.push(Arm::frozen(ModelKind::Lstm));
        arms
    }

    pub fn name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.frozen {
            write!(f, "{}-frozen", self.kind.name())
        } else {
            f.write_str(self.kind.name())
        }
    }
}

impl FromStr for Arm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (base, frozen) = match s.strip_suffix("-frozen") {
            Some(b) => (b, true),
            None => (s, false),
        };
        let kind: ModelKind = base.parse()?;
        if frozen && !kind.is_trainable() {
            return Err(format!("`{s}`: only trainable models can be frozen"));
        }
        Ok(Arm { kind, frozen })
    }
}

impl TryFrom<String> for Arm {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Arm> for String {
    fn from(a: Arm) -> String {
        a.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub repeats: usize,
    pub arms: Vec<Arm>,
    pub engine: EngineConfig,
    pub arch: Arch,
    pub base_seed: u64,
    /// Training trajectories must be longer than this.
    pub train_min_len: usize,
    /// Test trajectories must be longer than this.
    pub test_min_len: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            repeats: 10,
            arms: Arm::defaults(),
            engine: EngineConfig::default(),
            arch: Arch::default(),
            base_seed: 2024,
            train_min_len: 20,
            test_min_len: 25,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.repeats == 0 {
            return Err(BenchError::InvalidConfig("repeats must be at least 1".into()));
        }
        if self.arms.is_empty() {
            return Err(BenchError::InvalidConfig("no models selected".into()));
        }
        let mut seen = self.arms.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.arms.len() {
            return Err(BenchError::InvalidConfig("duplicate model in list".into()));
        }
        self.engine
            .validate()
            .map_err(|e| BenchError::InvalidConfig(e.to_string()))?;
        if self.engine.train.window != self.arch.window {
            return Err(BenchError::InvalidConfig(format!(
                "engine window {} does not match architecture window {}",
                self.engine.train.window, self.arch.window
            )));
        }
        if self.train_min_len + 1 < self.engine.min_train_len() {
            return Err(BenchError::InvalidThresholds(format!(
                "train threshold {} admits trajectories shorter than {}",
                self.train_min_len,
                self.engine.min_train_len()
            )));
        }
        if self.test_min_len + 1 < self.engine.min_run_len() {
            return Err(BenchError::InvalidThresholds(format!(
                "test threshold {} admits trajectories shorter than {}",
                self.test_min_len,
                self.engine.min_run_len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    /// Mean two-step 3D error over every realized record of every repeat.
    pub mean_j3d_m: f64,
    /// Population standard deviation of the per-repeat means.
    pub stddev_j3d_m: f64,
    pub repeats: usize,
    pub per_repeat: Vec<f64>,
    /// Realized records per repeat.
    pub records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub model: String,
    pub uav_id: String,
    pub mean_j3d_m: f64,
    pub per_repeat: Vec<f64>,
    /// Realized records per repeat.
    pub records: usize,
    /// Per-step mean 3D error averaged over repeats, indexed from the first
    /// prediction step.
    pub per_step_j3d_m: Vec<f64>,
    pub first_step: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub model: String,
    pub repeat: usize,
    pub pretrain_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub train_trajectories: usize,
    pub test_trajectories: usize,
    pub models: Vec<ModelSummary>,
    pub trajectories: Vec<TrajectorySummary>,
    pub seeds: Vec<SeedEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at_unix: Option<u64>,
}

impl BenchReport {
    pub fn model(&self, name: &str) -> Option<&ModelSummary> {
        self.models.iter().find(|m| m.model == name)
    }

    pub fn trajectory(&self, model: &str, uav_id: &str) -> Option<&TrajectorySummary> {
        self.trajectories
            .iter()
            .find(|t| t.model == model && t.uav_id == uav_id)
    }

    /// Record-weighted mean error of `model` over the trajectories selected
    /// by `keep`.
    pub fn subset_mean(&self, model: &str, keep: impl Fn(&str) -> bool) -> Option<f64> {
        let (sum, n) = self
            .trajectories
            .iter()
            .filter(|t| t.model == model && keep(&t.uav_id))
            .fold((0.0, 0usize), |(s, n), t| (s + t.mean_j3d_m * t.records as f64, n + t.records));
        (n > 0).then(|| sum / n as f64)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Seed shared by every arm of `kind` in repeat `r`, so the frozen and
/// retrained LSTM start from the same pretrained weights.
pub fn pretrain_seed(base_seed: u64, kind: ModelKind, repeat: usize) -> u64 {
    mix(&[base_seed, hash_str(kind.name()), repeat as u64])
}

pub fn trajectory_seed(base_seed: u64, kind: ModelKind, repeat: usize, uav_id: &str) -> u64 {
    mix(&[base_seed, hash_str(kind.name()), repeat as u64, hash_str(uav_id)])
}

/// Builds and pretrains the model for one (kind, repeat).
pub fn pretrained_trainer(
    kind: ModelKind,
    train: &Dataset,
    cfg: &BenchConfig,
    repeat: usize,
) -> Result<Trainer, EngineError> {
    let seed = pretrain_seed(cfg.base_seed, kind, repeat);
    let model = PredictorModel::new(kind, &cfg.arch, mix(&[seed, 0]))?;
    let mut trainer = Trainer::new(model);
    engine::pretrain(&mut trainer, train, &cfg.engine, mix(&[seed, 1]))?;
    Ok(trainer)
}

fn arm_engine(cfg: &BenchConfig, arm: Arm) -> EngineConfig {
    EngineConfig {
        online_retrain: cfg.engine.online_retrain && !arm.frozen,
        ..cfg.engine.clone()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pop_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

fn realized_j3d(records: &[PredictionRecord]) -> Vec<f64> {
    records
        .iter()
        .filter_map(|r| r.errors.map(|e| e.average.j3d))
        .collect()
}

pub fn run_benchmark(train: &Dataset, test: &Dataset, cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    let train = filter_dataset(train, cfg.train_min_len).map_err(|_| BenchError::EmptyDataset(DatasetRole::Train))?;
    let test = filter_dataset(test, cfg.test_min_len).map_err(|_| BenchError::EmptyDataset(DatasetRole::Test))?;
    let engine_err = |arm: Arm, repeat: usize| move |source| BenchError::Engine { arm: arm.name(), repeat, source };

    let mut pre_keys: Vec<(ModelKind, usize)> = cfg
        .arms
        .iter()
        .flat_map(|a| (0..cfg.repeats).map(move |r| (a.kind, r)))
        .collect();
    pre_keys.sort_by_key(|&(k, r)| (k.name(), r));
    pre_keys.dedup();
    let pretrained: BTreeMap<(&'static str, usize), Trainer> = pre_keys
        .par_iter()
        .map(|&(kind, r)| {
            pretrained_trainer(kind, &train, cfg, r)
                .map(|t| ((kind.name(), r), t))
                .map_err(engine_err(Arm::new(kind), r))
        })
        .collect::<Result<_, _>>()?;

    let n_traj = test.len();
    let tasks: Vec<(Arm, usize, usize)> = cfg
        .arms
        .iter()
        .flat_map(|&a| (0..cfg.repeats).flat_map(move |r| (0..n_traj).map(move |i| (a, r, i))))
        .collect();
    let runs: Vec<Vec<PredictionRecord>> = tasks
        .par_iter()
        .map(|&(arm, r, i)| {
            let traj = &test.trajectories[i];
            let trainer = &pretrained[&(arm.kind.name(), r)];
            let seed = trajectory_seed(cfg.base_seed, arm.kind, r, &traj.uav_id);
            engine::run_trajectory(trainer, traj, &arm_engine(cfg, arm), seed).map_err(engine_err(arm, r))
        })
        .collect::<Result<_, _>>()?;

    let mut models = Vec::new();
    let mut trajectories = Vec::new();
    let mut seeds = Vec::new();
    for (a, &arm) in cfg.arms.iter().enumerate() {
        let name = arm.name();
        let block = &runs[a * cfg.repeats * n_traj..(a + 1) * cfg.repeats * n_traj];
        let mut per_repeat = Vec::with_capacity(cfg.repeats);
        let mut all = Vec::new();
        for r in 0..cfg.repeats {
            let rep: Vec<f64> = block[r * n_traj..(r + 1) * n_traj]
                .iter()
                .flat_map(|recs| realized_j3d(recs))
                .collect();
            per_repeat.push(mean(&rep));
            all.extend(rep);
            seeds.push(SeedEntry {
                model: name.clone(),
                repeat: r,
                pretrain_seed: pretrain_seed(cfg.base_seed, arm.kind, r),
            });
        }
        models.push(ModelSummary {
            model: name.clone(),
            mean_j3d_m: mean(&all),
            stddev_j3d_m: pop_std(&per_repeat),
            repeats: cfg.repeats,
            per_repeat,
            records: all.len() / cfg.repeats,
        });
        for (i, traj) in test.trajectories.iter().enumerate() {
            let reps: Vec<&Vec<PredictionRecord>> = (0..cfg.repeats).map(|r| &block[r * n_traj + i]).collect();
            let per_repeat: Vec<f64> = reps
                .iter()
                .map(|recs| metrics::aggregate(recs).map(|m| m.mean_j3d_m))
                .collect::<Result<_, _>>()
                .expect("run_trajectory yields realized records");
            let steps = realized_j3d(reps[0]).len();
            let per_step_j3d_m = (0..steps)
                .map(|s| reps.iter().map(|recs| realized_j3d(recs)[s]).sum::<f64>() / cfg.repeats as f64)
                .collect();
            trajectories.push(TrajectorySummary {
                model: name.clone(),
                uav_id: traj.uav_id.clone(),
                mean_j3d_m: mean(&per_repeat),
                per_repeat,
                records: steps,
                per_step_j3d_m,
                first_step: reps[0][0].t,
            });
        }
    }

    Ok(BenchReport {
        config: cfg.clone(),
        train_trajectories: train.len(),
        test_trajectories: test.len(),
        models,
        trajectories,
        seeds,
        generated_at_unix: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub rank: usize,
    pub model: String,
    pub mean_j3d_m: f64,
    /// Test trajectories on which this model had the lowest mean error.
    pub trajectory_wins: usize,
}

/// Models sorted by overall mean error, best first.
pub fn compare_models(report: &BenchReport) -> Vec<RankRow> {
    let mut wins: BTreeMap<&str, usize> = BTreeMap::new();
    let mut best: BTreeMap<&str, (&str, f64)> = BTreeMap::new();
    for t in &report.trajectories {
        let entry = best.entry(&t.uav_id).or_insert((&t.model, t.mean_j3d_m));
        if t.mean_j3d_m < entry.1 {
            *entry = (&t.model, t.mean_j3d_m);
        }
    }
    for (model, _) in best.values() {
        *wins.entry(model).or_default() += 1;
    }
    let mut rows: Vec<RankRow> = report
        .models
        .iter()
        .map(|m| RankRow {
            rank: 0,
            model: m.model.clone(),
            mean_j3d_m: m.mean_j3d_m,
            trajectory_wins: wins.get(m.model.as_str()).copied().unwrap_or(0),
        })
        .collect();
    rows.sort_by(|a, b| a.mean_j3d_m.total_cmp(&b.mean_j3d_m));
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    rows
}
