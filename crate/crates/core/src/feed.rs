//! Line-delimited JSON position feed.
//!
//! A replay writer paces one `FeedRecord` per line at the broadcast interval
//! divided by a speedup factor. The predictor side reads the lines, drives an
//! [`OnlineSession`] and writes each `PredictionRecord` as one JSON line.

use std::io::{self, BufRead, Write};
use std::thread;
use std::time::{Duration, Instant};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineError, OnlineSession, PredictionRecord};
use crate::geo::{GeoPoint, Trajectory};

#[derive(Debug, Error)]
pub enum FeedError {
    #[error("feed i/o: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("speedup must be positive and finite, got {0}")]
    BadSpeedup(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedRecord {
    pub uav_id: String,
    pub t: u64,
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
}

impl FeedRecord {
    pub fn pos(&self) -> GeoPoint {
        GeoPoint::new(self.lat, self.lon, self.alt)
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("feed record serializes")
    }
}

/// One record per trajectory point, `t` being the 1-based step index.
pub fn feed_records(traj: &Trajectory) -> Vec<FeedRecord> {
    traj.points
        .iter()
        .map(|p| FeedRecord {
            uav_id: traj.uav_id.clone(),
            t: p.step as u64,
            lat: p.pos.lat,
            lon: p.pos.lon,
            alt: p.pos.alt,
        })
        .collect()
}

/// Writes `records` as JSON lines, line `i` no earlier than
/// `start + i · interval / speedup`. Returns the number of lines written.
pub fn replay<W: Write>(records: &[FeedRecord], mut out: W, interval: Duration, speedup: f64) -> Result<usize, FeedError> {
    if !(speedup > 0.0 && speedup.is_finite()) {
        return Err(FeedError::BadSpeedup(speedup));
    }
    let gap = interval.div_f64(speedup);
    let start = Instant::now();
    for (i, rec) in records.iter().enumerate() {
        let due = start + gap * i as u32;
        let now = Instant::now();
        if due > now {
            thread::sleep(due - now);
        }
        writeln!(out, "{}", rec.to_line())?;
        out.flush()?;
    }
    Ok(records.len())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedSummary {
    pub lines: usize,
    pub accepted: usize,
    pub skipped: usize,
    pub records: usize,
    pub realized: usize,
    pub uav_id: Option<String>,
}

fn write_record<W: Write>(out: &mut W, rec: &PredictionRecord, summary: &mut FeedSummary) -> io::Result<()> {
    writeln!(out, "{}", serde_json::to_string(rec).expect("record serializes"))?;
    summary.records += 1;
    if rec.errors.is_some() {
        summary.realized += 1;
    }
    Ok(())
}

/// Consumes a feed until end of stream, emitting records as soon as both of
/// their target points have arrived and the unrealized tail at the end.
///
/// Lines that do not parse, carry out-of-range coordinates, belong to a
/// different UAV than the first accepted line, or do not advance `t` are
/// skipped with a warning.
pub fn predict_stream<R: BufRead, W: Write>(
    input: R,
    mut out: W,
    mut session: OnlineSession,
) -> Result<FeedSummary, FeedError> {
    let mut summary = FeedSummary::default();
    let mut last_t: Option<u64> = None;
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        summary.lines += 1;
        let rec: FeedRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                warn!("feed line {}: {e}", idx + 1);
                summary.skipped += 1;
                continue;
            }
        };
        let reject = if let Err(e) = rec.pos().validate() {
            Some(e)
        } else if summary.uav_id.as_ref().is_some_and(|id| *id != rec.uav_id) {
            Some(format!("unexpected uav_id `{}`", rec.uav_id))
        } else if last_t.is_some_and(|t| rec.t <= t) {
            Some(format!("t = {} does not advance", rec.t))
        } else {
            None
        };
        if let Some(reason) = reject {
            warn!("feed line {}: {reason}", idx + 1);
            summary.skipped += 1;
            continue;
        }
        summary.uav_id.get_or_insert_with(|| rec.uav_id.clone());
        last_t = Some(rec.t);
        summary.accepted += 1;
        for r in session.push(rec.pos())? {
            write_record(&mut out, &r, &mut summary)?;
        }
        out.flush()?;
    }
    for r in session.finish() {
        write_record(&mut out, &r, &mut summary)?;
    }
    out.flush()?;
    Ok(summary)
}
