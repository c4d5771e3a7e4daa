//! Trajectory data model and CSV ingestion.
//!
//! A [`Dataset`] is a set of per-UAV [`Trajectory`] values read from a flat
//! CSV export with the header `uav_id,timestamp,lat_deg,lon_deg,alt_m`.
//! Rows may arrive in any order; they are grouped by UAV and sorted by
//! timestamp, and step indices are re-derived from that order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact CSV header expected on input and produced on output.
pub const CSV_HEADER: &str = "uav_id,timestamp,lat_deg,lon_deg,alt_m";

/// Meters per degree of latitude used for local flat-earth conversion.
pub const METERS_PER_DEG_LAT: f64 = 114_100.0;
/// Meters per degree of longitude used for local flat-earth conversion.
pub const METERS_PER_DEG_LON: f64 = 89_900.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("range violation at line {line}: {reason}")]
    RangeViolation { line: u64, reason: String },
    #[error("duplicate timestamp {timestamp} for uav `{uav_id}` at line {line}")]
    DuplicateTimestamp {
        line: u64,
        uav_id: String,
        timestamp: f64,
    },
    #[error("no trajectory is longer than {min_len} points")]
    EmptyResult { min_len: usize },
    #[error("invalid filter threshold {0}")]
    BadThreshold(usize),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One 3D position sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64, alt: f64) -> Self {
        Self { lat, lon, alt }
    }

    /// Checked constructor enforcing coordinate bounds.
    pub fn try_new(lat: f64, lon: f64, alt: f64) -> Result<Self, String> {
        let p = Self { lat, lon, alt };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.lat.is_finite() || !(-90.0..=90.0).contains(&self.lat) {
            return Err(format!("latitude {} outside [-90, 90]", self.lat));
        }
        if !self.lon.is_finite() || !(-180.0..=180.0).contains(&self.lon) {
            return Err(format!("longitude {} outside [-180, 180]", self.lon));
        }
        if !self.alt.is_finite() {
            return Err(format!("altitude {} is not finite", self.alt));
        }
        Ok(())
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.lat, self.lon, self.alt]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    /// Local (north, east) offset in meters to `other`, using the fixed
    /// per-degree constants.
    pub fn ground_offset_m(&self, other: &GeoPoint) -> (f64, f64) {
        (
            (other.lat - self.lat) * METERS_PER_DEG_LAT,
            (other.lon - self.lon) * METERS_PER_DEG_LON,
        )
    }

    pub fn ground_distance_m(&self, other: &GeoPoint) -> f64 {
        let (n, e) = self.ground_offset_m(other);
        n.hypot(e)
    }

    /// Point displaced by the given local offsets in meters.
    pub fn offset_m(&self, north: f64, east: f64, up: f64) -> GeoPoint {
        GeoPoint::new(
            self.lat + north / METERS_PER_DEG_LAT,
            self.lon + east / METERS_PER_DEG_LON,
            self.alt + up,
        )
    }
}

/// One broadcast of a UAV position. `step` is 1-based and positional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub timestamp: f64,
    pub pos: GeoPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub uav_id: String,
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    /// Builds a trajectory from `(timestamp, position)` samples, sorting by
    /// timestamp and assigning steps 1..L.
    pub fn from_samples(
        uav_id: impl Into<String>,
        mut samples: Vec<(f64, GeoPoint)>,
    ) -> Result<Self, IngestError> {
        let uav_id = uav_id.into();
        if samples.is_empty() {
            return Err(IngestError::InvalidTrajectory(format!(
                "trajectory `{uav_id}` has no points"
            )));
        }
        for (ts, p) in &samples {
            if !ts.is_finite() {
                return Err(IngestError::InvalidTrajectory(format!(
                    "non-finite timestamp in `{uav_id}`"
                )));
            }
            p.validate().map_err(IngestError::InvalidTrajectory)?;
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(w) = samples.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(IngestError::DuplicateTimestamp {
                line: 0,
                uav_id,
                timestamp: w[0].0,
            });
        }
        let points = samples
            .into_iter()
            .enumerate()
            .map(|(i, (timestamp, pos))| TrajectoryPoint {
                step: i + 1,
                timestamp,
                pos,
            })
            .collect();
        Ok(Self { uav_id, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<GeoPoint> {
        self.points.iter().map(|p| p.pos).collect()
    }

    /// Prefix of the first `len` points.
    pub fn truncated(&self, len: usize) -> Trajectory {
        Trajectory {
            uav_id: self.uav_id.clone(),
            points: self.points[..len.min(self.points.len())].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetRole {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub role: DatasetRole,
}

impl Dataset {
    pub fn new(trajectories: Vec<Trajectory>, role: DatasetRole) -> Result<Self, IngestError> {
        let mut seen = std::collections::HashSet::new();
        for t in &trajectories {
            if !seen.insert(t.uav_id.as_str()) {
                return Err(IngestError::InvalidTrajectory(format!(
                    "uav_id `{}` appears twice",
                    t.uav_id
                )));
            }
        }
        Ok(Self { trajectories, role })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn get(&self, uav_id: &str) -> Option<&Trajectory> {
        self.trajectories.iter().find(|t| t.uav_id == uav_id)
    }
}

fn parse_field(field: Option<&str>, name: &str, line: u64) -> Result<f64, IngestError> {
    let raw = field.ok_or_else(|| IngestError::MalformedRow {
        line,
        reason: format!("missing {name}"),
    })?;
    raw.trim()
        .parse::<f64>()
        .map_err(|_| IngestError::MalformedRow {
            line,
            reason: format!("{name} `{raw}` is not a number"),
        })
}

/// Parses a dataset from CSV text. Trajectories are returned ordered by
/// `uav_id`.
pub fn parse_csv<R: Read>(input: R, role: DatasetRole) -> Result<Dataset, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);

    let header = reader.headers().map_err(|e| csv_error(e, 1))?.clone();
    let header_line = header.iter().collect::<Vec<_>>().join(",");
    if header_line != CSV_HEADER {
        return Err(IngestError::MalformedRow {
            line: 1,
            reason: format!("expected header `{CSV_HEADER}`, found `{header_line}`"),
        });
    }

    // uav_id -> (timestamp, point, line)
    let mut groups: BTreeMap<String, Vec<(f64, GeoPoint, u64)>> = BTreeMap::new();
    for result in reader.records() {
        let record = result.map_err(|e| csv_error(e, 0))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 5 {
            return Err(IngestError::MalformedRow {
                line,
                reason: format!("expected 5 columns, found {}", record.len()),
            });
        }
        let uav_id = record[0].trim().to_string();
        if uav_id.is_empty() {
            return Err(IngestError::MalformedRow {
                line,
                reason: "empty uav_id".into(),
            });
        }
        let timestamp = parse_field(record.get(1), "timestamp", line)?;
        let lat = parse_field(record.get(2), "lat_deg", line)?;
        let lon = parse_field(record.get(3), "lon_deg", line)?;
        let alt = parse_field(record.get(4), "alt_m", line)?;
        if !timestamp.is_finite() {
            return Err(IngestError::RangeViolation {
                line,
                reason: format!("timestamp {timestamp} is not finite"),
            });
        }
        let pos = GeoPoint::try_new(lat, lon, alt)
            .map_err(|reason| IngestError::RangeViolation { line, reason })?;
        groups.entry(uav_id).or_default().push((timestamp, pos, line));
    }

    let mut trajectories = Vec::with_capacity(groups.len());
    for (uav_id, mut rows) in groups {
        rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(IngestError::DuplicateTimestamp {
                line: w[1].2.max(w[0].2),
                uav_id,
                timestamp: w[0].0,
            });
        }
        let samples = rows.into_iter().map(|(ts, p, _)| (ts, p)).collect();
        trajectories.push(Trajectory::from_samples(uav_id, samples)?);
    }
    Dataset::new(trajectories, role)
}

fn csv_error(e: csv::Error, fallback_line: u64) -> IngestError {
    let line = e.position().map(|p| p.line()).unwrap_or(fallback_line);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => IngestError::Io(io),
        csv::ErrorKind::Utf8 { err, .. } => IngestError::MalformedRow {
            line,
            reason: format!("invalid UTF-8: {err}"),
        },
        other => IngestError::MalformedRow {
            line,
            reason: format!("{other:?}"),
        },
    }
}

/// Renders a dataset as CSV. Reals use the shortest representation that
/// parses back to the same `f64`.
pub fn to_csv(dataset: &Dataset) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for traj in &dataset.trajectories {
        for p in &traj.points {
            let _ = writeln!(
                out,
                "{},{:?},{:?},{:?},{:?}",
                traj.uav_id, p.timestamp, p.pos.lat, p.pos.lon, p.pos.alt
            );
        }
    }
    out
}

/// Keeps trajectories strictly longer than `min_len`, preserving order.
pub fn filter_dataset(dataset: &Dataset, min_len: usize) -> Result<Dataset, IngestError> {
    if min_len < 1 {
        return Err(IngestError::BadThreshold(min_len));
    }
    let trajectories: Vec<_> = dataset
        .trajectories
        .iter()
        .filter(|t| t.len() > min_len)
        .cloned()
        .collect();
    if trajectories.is_empty() {
        return Err(IngestError::EmptyResult { min_len });
    }
    Ok(Dataset {
        trajectories,
        role: dataset.role,
    })
}
