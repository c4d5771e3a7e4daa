//! Prediction error metrics.
//!
//! Axis errors are signed differences in native units (degrees for lat/lon,
//! meters for altitude). The 3D error converts degrees to meters with the
//! fixed per-degree constants and is always in meters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::PredictionRecord;
use crate::geo::{GeoPoint, METERS_PER_DEG_LAT, METERS_PER_DEG_LON};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no records with realized errors to aggregate")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepError {
    /// Latitude error, degrees.
    pub jx: f64,
    /// Longitude error, degrees.
    pub jy: f64,
    /// Altitude error, meters.
    pub jz: f64,
    /// 3D error, meters.
    pub j3d: f64,
}

impl StepError {
    pub fn between(pred: &GeoPoint, actual: &GeoPoint) -> Self {
        let (jx, jy, jz) = axis_errors(pred, actual);
        Self {
            jx,
            jy,
            jz,
            j3d: error_3d(jx, jy, jz),
        }
    }

    pub fn zero() -> Self {
        Self {
            jx: 0.0,
            jy: 0.0,
            jz: 0.0,
            j3d: 0.0,
        }
    }

    fn sum_sq(&self) -> f64 {
        self.jx * self.jx + self.jy * self.jy + self.jz * self.jz
    }
}

/// Signed per-axis errors `pred − actual`.
pub fn axis_errors(pred: &GeoPoint, actual: &GeoPoint) -> (f64, f64, f64) {
    (pred.lat - actual.lat, pred.lon - actual.lon, pred.alt - actual.alt)
}

/// 3D error in meters from degree lat/lon errors and a meter altitude error.
pub fn error_3d(jx: f64, jy: f64, jz: f64) -> f64 {
    let north = jx * METERS_PER_DEG_LAT;
    let east = jy * METERS_PER_DEG_LON;
    (north * north + east * east + jz * jz).sqrt()
}

/// Componentwise mean of the t+1 and t+2 errors. `j3d` is the mean of the
/// two 3D errors, not the 3D error of the mean.
pub fn two_step_average(e1: &StepError, e2: &StepError) -> StepError {
    StepError {
        jx: (e1.jx + e2.jx) / 2.0,
        jy: (e1.jy + e2.jy) / 2.0,
        jz: (e1.jz + e2.jz) / 2.0,
        j3d: (e1.j3d + e2.j3d) / 2.0,
    }
}

/// Errors of one prediction record: each horizon and their average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordErrors {
    pub step1: StepError,
    pub step2: StepError,
    pub average: StepError,
}

impl RecordErrors {
    pub fn new(predicted: &[GeoPoint; 2], realized: &[GeoPoint; 2]) -> Self {
        let step1 = StepError::between(&predicted[0], &realized[0]);
        let step2 = StepError::between(&predicted[1], &realized[1]);
        Self {
            step1,
            step2,
            average: two_step_average(&step1, &step2),
        }
    }
}

/// Per-trajectory summary over the records that have realized errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    /// Signed mean of the two-step-averaged latitude errors, degrees.
    pub mean_jx: f64,
    pub mean_jy: f64,
    /// Meters.
    pub mean_jz: f64,
    /// Multi-dimensional MSE over every aggregated horizon, in native units.
    pub mse_alpha: f64,
    /// Mean of the two-step-averaged 3D errors, meters.
    pub mean_j3d_m: f64,
    pub n: usize,
    /// Step index of the first aggregated record.
    pub w: usize,
}

pub fn aggregate(records: &[PredictionRecord]) -> Result<TrajectoryReport, MetricsError> {
    let realized: Vec<_> = records
        .iter()
        .filter_map(|r| r.errors.map(|e| (r.t, e)))
        .collect();
    let Some(&(w, _)) = realized.first() else {
        return Err(MetricsError::EmptyInput);
    };
    let n = realized.len();
    let nf = n as f64;
    let mut report = TrajectoryReport {
        mean_jx: 0.0,
        mean_jy: 0.0,
        mean_jz: 0.0,
        mse_alpha: 0.0,
        mean_j3d_m: 0.0,
        n,
        w,
    };
    let mut sq = 0.0;
    for (_, e) in &realized {
        report.mean_jx += e.average.jx;
        report.mean_jy += e.average.jy;
        report.mean_jz += e.average.jz;
        report.mean_j3d_m += e.average.j3d;
        sq += e.step1.sum_sq() + e.step2.sum_sq();
    }
    report.mean_jx /= nf;
    report.mean_jy /= nf;
    report.mean_jz /= nf;
    report.mean_j3d_m /= nf;
    report.mse_alpha = sq / (3.0 * 2.0 * nf);
    Ok(report)
}
