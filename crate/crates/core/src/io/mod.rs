//! Reading tracks, preprocessing, configuration files and persisted output.

mod config;
mod persist;
mod report;

pub use config::{RunConfig, SimSpec, Variant};
pub use persist::{read_draws, read_manifest, write_draws, DataInfo, Manifest, Provenance, SCHEMA_VERSION};
pub use report::{write_summary_outputs, ReportOptions};

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path as FsPath;

use chrono::{DateTime, NaiveDateTime, Utc};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::Path;
use crate::linalg::Vec2;

/// One row of an input track.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRow {
    /// One-based line in the source file.
    pub line: usize,
    /// Seconds since the Unix epoch.
    pub time: i64,
    /// `None` for a missing fix.
    pub location: Option<Vec2>,
}

/// A parsed `time,x,y` file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrack {
    pub rows: Vec<TrackRow>,
    /// Whether the times were written as calendar timestamps rather than integers.
    pub iso_time: bool,
}

fn parse_time(cell: &str) -> Option<(i64, bool)> {
    if let Ok(t) = cell.parse::<i64>() {
        return Some((t, false));
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(cell) {
        return Some((t.timestamp(), true));
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(cell, f).ok())
        .map(|t| (t.and_utc().timestamp(), true))
}

/// Formats epoch seconds as an RFC 3339 UTC timestamp.
pub fn format_time(t: i64) -> String {
    DateTime::<Utc>::from_timestamp(t, 0)
        .map(|d| d.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| t.to_string())
}

/// Parses a track from CSV text with header `time,x,y`.
pub fn parse_track<R: Read>(reader: R) -> Result<RawTrack> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = csv.headers().map_err(|e| Error::data_at(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != ["time", "x", "y"] {
        return Err(Error::data_at(1, format!("expected header `time,x,y`, found `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut rows: Vec<TrackRow> = Vec::new();
    let mut iso_time = false;
    for record in csv.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let (time, iso) =
            parse_time(&record[0]).ok_or_else(|| Error::data_at(line, format!("unreadable time `{}`", &record[0])))?;
        iso_time |= iso;
        let coord = |i: usize, name: &str| -> Result<Option<f64>> {
            let cell = &record[i];
            if cell.is_empty() {
                return Ok(None);
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                _ => Err(Error::data_at(line, format!("malformed {name} value `{cell}`"))),
            }
        };
        let location = match (coord(1, "x")?, coord(2, "y")?) {
            (Some(x), Some(y)) => Some(Vec2::new(x, y)),
            (None, None) => None,
            _ => return Err(Error::data_at(line, "x and y must both be present or both be empty")),
        };
        if let Some(prev) = rows.last() {
            if time < prev.time {
                return Err(Error::data_at(line, format!("time goes backwards from line {}", prev.line)));
            }
        }
        rows.push(TrackRow { line, time, location });
    }
    let observed = rows.iter().filter(|r| r.location.is_some()).count();
    if observed < 3 {
        return Err(Error::data(format!("a track needs at least 3 observed locations, found {observed}")));
    }
    Ok(RawTrack { rows, iso_time })
}

pub fn load_track(path: impl AsRef<FsPath>) -> Result<RawTrack> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    parse_track(file)
}

/// Centring and scaling applied to coordinates before fitting.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Transform {
    pub center: Vec2,
    pub scale: f64,
}

impl Transform {
    pub const IDENTITY: Transform = Transform { center: Vec2::ZERO, scale: 1.0 };

    pub fn forward(&self, p: Vec2) -> Vec2 {
        (p - self.center) * (1.0 / self.scale)
    }

    pub fn inverse(&self, q: Vec2) -> Vec2 {
        q * self.scale + self.center
    }
}

/// A track ready for fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub path: Path,
    pub transform: Transform,
    pub iso_time: bool,
    /// Missing rows added to fill gaps in the sampling schedule.
    pub inserted: usize,
}

/// Regularises the time grid and optionally standardises coordinates.
///
/// The sampling interval is the smallest positive time difference; longer
/// gaps must be whole multiples of it and are filled with missing rows.
/// Leading missing rows are dropped. With `center_scale`, coordinates are
/// centred on the observed per-axis means and divided by the square root of
/// the mean of the two per-axis sample variances. The returned path's `s0`
/// mirrors the second location through the first, so the initial bearing
/// starts along the first step.
pub fn preprocess(track: &RawTrack, center_scale: bool) -> Result<Preprocessed> {
    let first = track
        .rows
        .iter()
        .position(|r| r.location.is_some())
        .ok_or_else(|| Error::data("the track has no observed location"))?;
    let rows = &track.rows[first..];
    let dt = rows
        .windows(2)
        .map(|w| w[1].time - w[0].time)
        .filter(|&d| d > 0)
        .min()
        .ok_or_else(|| Error::data("all timestamps are equal"))?;
    let bad: Vec<String> = rows
        .windows(2)
        .filter(|w| {
            let d = w[1].time - w[0].time;
            d == 0 || d % dt != 0
        })
        .map(|w| format!("lines {}-{} ({} s)", w[0].line, w[1].line, w[1].time - w[0].time))
        .collect();
    if !bad.is_empty() {
        return Err(Error::data(format!(
            "time gaps are not whole multiples of the {dt} s interval: {}",
            bad.join(", ")
        )));
    }
    let mut points = Vec::new();
    let mut missing = Vec::new();
    let mut times = Vec::new();
    let mut inserted = 0;
    for (i, row) in rows.iter().enumerate() {
        if i > 0 {
            let gap = (row.time - rows[i - 1].time) / dt;
            for g in 1..gap {
                points.push(Vec2::new(f64::NAN, f64::NAN));
                missing.push(true);
                times.push(rows[i - 1].time + g * dt);
                inserted += 1;
            }
        }
        points.push(row.location.unwrap_or(Vec2::new(f64::NAN, f64::NAN)));
        missing.push(row.location.is_none());
        times.push(row.time);
    }
    let transform = if center_scale { standardizing_transform(&points, &missing)? } else { Transform::IDENTITY };
    let points: Vec<Vec2> = points
        .iter()
        .zip(&missing)
        .map(|(&p, &m)| if m { p } else { transform.forward(p) })
        .collect();
    let s0 = initial_s0_guess(&points, &missing);
    Ok(Preprocessed { path: Path::new(points, missing, s0, Some(times))?, transform, iso_time: track.iso_time, inserted })
}

fn standardizing_transform(points: &[Vec2], missing: &[bool]) -> Result<Transform> {
    let obs: Vec<Vec2> = points.iter().zip(missing).filter(|(_, &m)| !m).map(|(&p, _)| p).collect();
    let n = obs.len() as f64;
    let center = obs.iter().fold(Vec2::ZERO, |a, &p| a + p) * (1.0 / n);
    let vx = obs.iter().map(|p| (p.x - center.x).powi(2)).sum::<f64>() / (n - 1.0);
    let vy = obs.iter().map(|p| (p.y - center.y).powi(2)).sum::<f64>() / (n - 1.0);
    let scale = (0.5 * (vx + vy)).sqrt();
    if !(scale > 0.0) {
        return Err(Error::data("all observed locations coincide; the track cannot be scaled"));
    }
    Ok(Transform { center, scale })
}

fn initial_s0_guess(points: &[Vec2], missing: &[bool]) -> Vec2 {
    let p0 = points[0];
    match points.iter().zip(missing).skip(1).find(|(&p, &m)| !m && p != p0) {
        Some((&p, _)) => p0 * 2.0 - p,
        None => p0 - Vec2::new(1.0, 0.0),
    }
}

/// Reads the fitted path stored in a draws directory.
pub fn load_fitted_path(dir: impl AsRef<FsPath>, info: &DataInfo) -> Result<Path> {
    let track = load_track(dir.as_ref().join(&info.file))?;
    let mut path = preprocess(&track, false)?.path;
    path.s0 = info.s0;
    path.validate()?;
    Ok(path)
}

/// Writes a path as `time,x,y`, leaving missing locations empty.
///
/// Times come from the path's timestamps, else the location index is used.
pub fn write_path_csv<W: Write>(writer: W, path: &Path, transform: &Transform, iso_time: bool) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["time", "x", "y"])?;
    for i in 0..path.len() {
        let time = match &path.timestamps {
            Some(ts) if iso_time => format_time(ts[i]),
            Some(ts) => ts[i].to_string(),
            None => i.to_string(),
        };
        if path.missing[i] {
            csv.write_record([time, String::new(), String::new()])?;
        } else {
            let p = transform.inverse(path.points[i]);
            csv.write_record([time, format!("{:?}", p.x), format!("{:?}", p.y)])?;
        }
    }
    csv.flush()?;
    Ok(())
}

pub fn save_path_csv(file: impl AsRef<FsPath>, path: &Path, transform: &Transform, iso_time: bool) -> Result<()> {
    write_path_csv(File::create(file)?, path, transform, iso_time)
}

/// Writes zero-based states as one-based `step,state` rows.
pub fn save_states_csv(file: impl AsRef<FsPath>, z: &[usize]) -> Result<()> {
    let mut csv = csv::Writer::from_path(file)?;
    csv.write_record(["step", "state"])?;
    for (k, &s) in z.iter().enumerate() {
        csv.write_record([(k + 1).to_string(), (s + 1).to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

/// Reads one-based `step,state` rows back into zero-based states.
pub fn load_states_csv(file: impl AsRef<FsPath>) -> Result<Vec<usize>> {
    let mut csv = csv::Reader::from_path(file)?;
    let mut z = Vec::new();
    for record in csv.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let s: usize = record
            .get(1)
            .and_then(|c| c.trim().parse().ok())
            .filter(|&s| s >= 1)
            .ok_or_else(|| Error::data_at(line, "state must be a positive integer"))?;
        z.push(s - 1);
    }
    Ok(z)
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(file: impl AsRef<FsPath>) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(file)?))
}
