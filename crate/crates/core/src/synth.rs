//! Synthetic UAV trajectories for desk-scale benchmarks.
//!
//! Shapes are built in a local north/east/up frame in meters and mapped to
//! degrees with the same fixed per-degree constants the error metric uses, so
//! ground distances recomputed from the emitted degrees close exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{Dataset, DatasetRole, GeoPoint, Trajectory};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("bad shape parameters: {0}")]
    BadParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Line,
    Arc,
    Helix,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::Line, ShapeKind::Arc, ShapeKind::Helix];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Line => "line",
            ShapeKind::Arc => "arc",
            ShapeKind::Helix => "helix",
        }
    }
}

impl std::str::FromStr for ShapeKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "line" => Ok(ShapeKind::Line),
            "arc" => Ok(ShapeKind::Arc),
            "helix" => Ok(ShapeKind::Helix),
            other => Err(format!("unknown shape `{other}` (expected line, arc or helix)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub origin: GeoPoint,
    /// Ground speed, m/s.
    pub speed: f64,
    /// Broadcast interval, s.
    pub interval: f64,
    /// Initial course, degrees clockwise from north.
    pub heading_deg: f64,
    /// Turn radius for arc and helix, m.
    pub radius: f64,
    /// Vertical rate, m/s. Used by line and helix.
    pub climb_rate: f64,
    /// Turn to the right when true.
    pub clockwise: bool,
    /// Timestamp of the first point, seconds since epoch.
    pub start_time: f64,
}

impl Default for ShapeParams {
    fn default() -> Self {
        Self {
            origin: GeoPoint::new(30.5, 114.3, 120.0),
            speed: 10.0,
            interval: 2.5,
            heading_deg: 0.0,
            radius: 200.0,
            climb_rate: 0.0,
            clockwise: false,
            start_time: 1_600_000_000.0,
        }
    }
}

/// Generates one trajectory named `uav_id`.
pub fn synth_generate(
    uav_id: &str,
    kind: ShapeKind,
    params: &ShapeParams,
    n_points: usize,
    noise_std: f64,
    seed: u64,
) -> Result<Trajectory, SynthError> {
    let bad = |m: &str| Err(SynthError::BadParams(m.to_string()));
    if n_points < 1 {
        return bad("n_points must be at least 1");
    }
    if !(params.speed.is_finite() && params.speed > 0.0) {
        return bad("speed must be positive");
    }
    if !(params.interval.is_finite() && params.interval > 0.0) {
        return bad("interval must be positive");
    }
    if !(noise_std.is_finite() && noise_std >= 0.0) {
        return bad("noise_std must be non-negative");
    }
    if !params.climb_rate.is_finite() || !params.heading_deg.is_finite() {
        return bad("climb rate and heading must be finite");
    }
    params.origin.validate().map_err(SynthError::BadParams)?;

    let step = params.speed * params.interval;
    let heading = params.heading_deg.to_radians();
    let climb_step = params.climb_rate * params.interval;

    // Local (north, east, up) offsets from the origin.
    let local: Vec<(f64, f64, f64)> = match kind {
        ShapeKind::Line => (0..n_points)
            .map(|i| {
                let d = step * i as f64;
                (d * heading.cos(), d * heading.sin(), climb_step * i as f64)
            })
            .collect(),
        ShapeKind::Arc | ShapeKind::Helix => {
            let r = params.radius;
            if !(r.is_finite() && r > 0.0) {
                return bad("radius must be positive");
            }
            if step > 2.0 * r {
                return bad("speed * interval exceeds the circle diameter");
            }
            // Chord length between consecutive points equals `step`.
            let dtheta = 2.0 * (step / (2.0 * r)).asin();
            let turn = if params.clockwise { 1.0 } else { -1.0 };
            // Center sits perpendicular to the initial course.
            let side = heading + turn * std::f64::consts::FRAC_PI_2;
            let (cn, ce) = (r * side.cos(), r * side.sin());
            let theta0 = (-ce).atan2(-cn);
            let climb = if kind == ShapeKind::Helix { climb_step } else { 0.0 };
            (0..n_points)
                .map(|i| {
                    let theta = theta0 + turn * dtheta * i as f64;
                    (
                        cn + r * theta.cos(),
                        ce + r * theta.sin(),
                        climb * i as f64,
                    )
                })
                .collect()
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_std).map_err(|e| SynthError::BadParams(e.to_string()))?;
    let mut samples = Vec::with_capacity(n_points);
    for (i, (n, e, u)) in local.into_iter().enumerate() {
        let (dn, de, du) = if noise_std > 0.0 {
            (noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng))
        } else {
            (0.0, 0.0, 0.0)
        };
        let p = params.origin.offset_m(n + dn, e + de, u + du);
        p.validate().map_err(SynthError::BadParams)?;
        samples.push((params.start_time + params.interval * i as f64, p));
    }
    Trajectory::from_samples(uav_id, samples).map_err(|e| SynthError::BadParams(e.to_string()))
}

/// Configuration for [`synthetic_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seeds_per_shape: usize,
    pub train_per_shape: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub noise_std: f64,
    pub base_seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seeds_per_shape: 5,
            train_per_shape: 4,
            min_len: 30,
            max_len: 40,
            noise_std: 1.0,
            base_seed: 2024,
        }
    }
}

fn random_params(rng: &mut ChaCha8Rng, kind: ShapeKind) -> ShapeParams {
    let origin = GeoPoint::new(
        30.5 + rng.random_range(-0.05..0.05),
        114.3 + rng.random_range(-0.05..0.05),
        rng.random_range(80.0..200.0),
    );
    let climb_rate = match kind {
        ShapeKind::Line => rng.random_range(-0.5..0.5),
        ShapeKind::Arc => 0.0,
        ShapeKind::Helix => rng.random_range(0.5..2.0),
    };
    ShapeParams {
        origin,
        speed: rng.random_range(6.0..14.0),
        interval: rng.random_range(2.0..3.0),
        heading_deg: rng.random_range(0.0..360.0),
        radius: rng.random_range(150.0..300.0),
        climb_rate,
        clockwise: rng.random_bool(0.5),
        start_time: 1_600_000_000.0 + rng.random_range(0.0..86_400.0_f64).floor(),
    }
}

/// Bundled benchmark suite: line, arc and helix shapes, `seeds_per_shape`
/// test trajectories each and `train_per_shape` training trajectories each.
/// Test ids look like `arc-03`, training ids like `train-arc-01`.
pub fn synthetic_suite(cfg: &SuiteConfig) -> Result<(Dataset, Dataset), SynthError> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (role, count, out) in [
        (DatasetRole::Train, cfg.train_per_shape, &mut train),
        (DatasetRole::Test, cfg.seeds_per_shape, &mut test),
    ] {
        for kind in ShapeKind::ALL {
            for i in 0..count {
                let salt = match role {
                    DatasetRole::Train => 0x7261_696e,
                    DatasetRole::Test => 0x7465_7374,
                };
                let seed = crate::seed::mix(&[cfg.base_seed, salt, kind as u64, i as u64]);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let params = random_params(&mut rng, kind);
                let n = rng.random_range(cfg.min_len..=cfg.max_len);
                let id = match role {
                    DatasetRole::Train => format!("train-{}-{i:02}", kind.name()),
                    DatasetRole::Test => format!("{}-{i:02}", kind.name()),
                };
                out.push(synth_generate(&id, kind, &params, n, cfg.noise_std, seed ^ 1)?);
            }
        }
    }
    let train = Dataset::new(train, DatasetRole::Train).map_err(|e| SynthError::BadParams(e.to_string()))?;
    let test = Dataset::new(test, DatasetRole::Test).map_err(|e| SynthError::BadParams(e.to_string()))?;
    Ok((train, test))
}
