//! Per-trajectory Z-score normalization of positions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPoint;

/// Standard deviations below this are treated as degenerate and replaced by 1.
pub const DEGENERATE_SIGMA: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("cannot compute statistics of an empty point list")]
    EmptyInput,
}

/// Per-dimension mean and population standard deviation, ordered
/// (lat, lon, alt).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mu: [f64; 3],
    pub sigma: [f64; 3],
}

impl NormStats {
    pub fn compute(points: &[GeoPoint]) -> Result<Self, PreprocessError> {
        if points.is_empty() {
            return Err(PreprocessError::EmptyInput);
        }
        let n = points.len() as f64;
        // accumulate around the first sample so constant columns stay exact
        let shift = points[0].to_array();
        let mut mean_d = [0.0; 3];
        for p in points {
            for ((m, v), s0) in mean_d.iter_mut().zip(p.to_array()).zip(shift) {
                *m += v - s0;
            }
        }
        mean_d.iter_mut().for_each(|m| *m /= n);
        let mu: [f64; 3] = std::array::from_fn(|i| shift[i] + mean_d[i]);

        let mut sigma = [0.0; 3];
        for p in points {
            for (i, (s, v)) in sigma.iter_mut().zip(p.to_array()).enumerate() {
                let d = v - shift[i] - mean_d[i];
                *s += d * d;
            }
        }
        for s in sigma.iter_mut() {
            *s = (*s / n).sqrt();
            if !(*s >= DEGENERATE_SIGMA) {
                *s = 1.0;
            }
        }
        Ok(Self { mu, sigma })
    }

    pub fn normalize(&self, p: &GeoPoint) -> [f64; 3] {
        let v = p.to_array();
        std::array::from_fn(|i| (v[i] - self.mu[i]) / self.sigma[i])
    }

    pub fn denormalize(&self, v: &[f64; 3]) -> GeoPoint {
        GeoPoint::from_array(std::array::from_fn(|i| v[i] * self.sigma[i] + self.mu[i]))
    }

    pub fn normalize_all(&self, points: &[GeoPoint]) -> Vec<[f64; 3]> {
        points.iter().map(|p| self.normalize(p)).collect()
    }
}

/// Free-function form of [`NormStats::compute`].
pub fn compute_stats(points: &[GeoPoint]) -> Result<NormStats, PreprocessError> {
    NormStats::compute(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn population_sigma() {
        let pts: Vec<_> = [10.0, 12.0, 14.0]
            .iter()
            .map(|&lat| GeoPoint::new(lat, 100.0, 50.0))
            .collect();
        let s = compute_stats(&pts).unwrap();
        assert!((s.mu[0] - 12.0).abs() < 1e-12);
        assert!((s.sigma[0] - 1.632993161855452).abs() < 1e-12);
        assert_eq!(s.sigma[1], 1.0);
        assert_eq!(s.sigma[2], 1.0);
        let z = s.normalize(&GeoPoint::new(14.0, 100.0, 50.0));
        assert!((z[0] - 1.224744871391589).abs() < 1e-12);
        assert_eq!(z[1], 0.0);
    }

    #[test]
    fn constant_column_is_exact() {
        let pts: Vec<_> = (0..37)
            .map(|i| GeoPoint::new(30.0 + i as f64 * 1e-4, 114.0, 2999.7))
            .collect();
        let s = compute_stats(&pts).unwrap();
        assert_eq!(s.sigma[2], 1.0);
        assert!(s.normalize_all(&pts).iter().all(|z| z[2] == 0.0));
    }

    #[test]
    fn degenerate_inputs() {
        let p = GeoPoint::new(30.0, 120.0, 100.0);
        let s = compute_stats(&[p, p, p]).unwrap();
        assert_eq!(s.sigma, [1.0; 3]);
        assert_eq!(s.mu, p.to_array());
        let s1 = compute_stats(&[p]).unwrap();
        assert_eq!(s1.sigma, [1.0; 3]);
        assert_eq!(s1.normalize(&p), [0.0; 3]);
        assert_eq!(compute_stats(&[]), Err(PreprocessError::EmptyInput));
    }

    #[test]
    fn affine_inverse() {
        let s = NormStats {
            mu: [12.0, 30.0, 100.0],
            sigma: [2.0, 3.0, 5.0],
        };
        assert_eq!(s.denormalize(&[1.0, 1.0, 1.0]), GeoPoint::new(14.0, 33.0, 105.0));
        assert_eq!(s.denormalize(&[0.0; 3]), GeoPoint::new(12.0, 30.0, 100.0));
    }

    proptest! {
        #[test]
        fn round_trip(lat in -90.0f64..90.0, lon in -180.0f64..180.0, alt in -1e3f64..1e4,
                      pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -50.0f64..50.0), 2..30)) {
            let pts: Vec<_> = pts.iter().map(|&(a, b, c)| GeoPoint::new(30.0 + a, 110.0 + b, 100.0 + c)).collect();
            let s = compute_stats(&pts).unwrap();
            let p = GeoPoint::new(lat, lon, alt);
            let q = s.denormalize(&s.normalize(&p));
            prop_assert!((q.lat - p.lat).abs() < 1e-9);
            prop_assert!((q.lon - p.lon).abs() < 1e-9);
            prop_assert!((q.alt - p.alt).abs() < 1e-9);
        }
    }
}
