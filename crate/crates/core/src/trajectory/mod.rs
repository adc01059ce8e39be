//! Fixed-rate vehicle trajectories, CSV ingestion and offline smoothing.
//!
//! CSV layout is one header row `t,x,y,v,a,heading` followed by one row per
//! sample, SI units, rows sorted by time.

mod kalman;

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

pub use kalman::{kalman_smooth, KalmanConfig};

/// Default sample interval (10 Hz).
pub const DEFAULT_DT: f64 = 0.1;
/// Allowed deviation of consecutive timestamp differences from `dt`.
pub const DT_TOLERANCE: f64 = 1e-6;

const CSV_COLUMNS: [&str; 6] = ["t", "x", "y", "v", "a", "heading"];

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("timestamps not strictly increasing at sample {index} (t = {t})")]
    Ordering { index: usize, t: f64 },
    #[error("sample {index} breaks the fixed rate: step {step} vs dt {dt}")]
    IrregularSampling { index: usize, step: f64, dt: f64 },
    #[error("sample {index}: {message}")]
    InvalidSample { index: usize, message: String },
    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("invalid Kalman configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One kinematic sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint<T> {
    pub t: T,
    pub x: T,
    pub y: T,
    /// Speed magnitude, non-negative.
    pub v: T,
    /// Signed longitudinal acceleration.
    pub a: T,
    /// Heading in `[0, 2π)`.
    pub heading: T,
}

impl<T: Scalar> TrajectoryPoint<T> {
    pub fn position(&self) -> [T; 2] {
        [self.x, self.y]
    }

    pub fn velocity(&self) -> [T; 2] {
        [self.v * self.heading.cos(), self.v * self.heading.sin()]
    }
}

/// Time-ordered samples of one vehicle at a fixed rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub vehicle_id: String,
    pub points: Vec<TrajectoryPoint<T>>,
    pub dt: T,
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_heading<T: Scalar>(angle: T) -> T {
    let tau = T::TAU();
    let mut h = angle % tau;
    if h < T::zero() {
        h = h + tau;
    }
    if h >= tau {
        h = T::zero();
    }
    h
}

impl<T: Scalar> Trajectory<T> {
    /// Builds a validated trajectory; `dt` is inferred from the first two samples.
    pub fn new(vehicle_id: impl Into<String>, points: Vec<TrajectoryPoint<T>>) -> Result<Self, TrajectoryError> {
        let dt = if points.len() >= 2 { points[1].t - points[0].t } else { T::lit(DEFAULT_DT) };
        let traj = Self { vehicle_id: vehicle_id.into(), points, dt };
        traj.validate()?;
        Ok(traj)
    }

    /// Checks the ordering, fixed-rate and non-negative speed invariants.
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        let tol = T::lit(DT_TOLERANCE);
        for (index, p) in self.points.iter().enumerate() {
            if !(p.t.is_finite() && p.x.is_finite() && p.y.is_finite() && p.v.is_finite() && p.a.is_finite()) {
                return Err(TrajectoryError::InvalidSample { index, message: "non-finite value".into() });
            }
            if p.v < T::zero() {
                return Err(TrajectoryError::InvalidSample { index, message: format!("negative speed {}", p.v) });
            }
        }
        for (i, w) in self.points.windows(2).enumerate() {
            let step = w[1].t - w[0].t;
            if step <= T::zero() {
                return Err(TrajectoryError::Ordering { index: i + 1, t: w[1].t.as_f64() });
            }
            if (step - self.dt).abs() > tol {
                return Err(TrajectoryError::IrregularSampling {
                    index: i + 1,
                    step: step.as_f64(),
                    dt: self.dt.as_f64(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = T> + '_ {
        self.points.iter().map(|p| p.t)
    }

    /// `(t, a)` pairs, the shape the acceleration metrics consume.
    pub fn accelerations(&self) -> Vec<(T, T)> {
        self.points.iter().map(|p| (p.t, p.a)).collect()
    }

    pub fn start_time(&self) -> Option<T> {
        self.points.first().map(|p| p.t)
    }

    pub fn end_time(&self) -> Option<T> {
        self.points.last().map(|p| p.t)
    }

    /// Index of the sample whose timestamp matches `t` within the rate tolerance.
    pub fn index_at(&self, t: T) -> Option<usize> {
        let tol = T::lit(DT_TOLERANCE);
        let idx = self.points.partition_point(|p| p.t < t - tol);
        self.points.get(idx).filter(|p| (p.t - t).abs() <= tol).map(|_| idx)
    }

    /// Reads the CSV format described at module level.
    pub fn read_csv<R: Read>(vehicle_id: impl Into<String>, reader: R) -> Result<Self, TrajectoryError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| TrajectoryError::Parse { line: 1, message: e.to_string() })?
            .clone();
        let mut cols = [0usize; 6];
        for (slot, name) in cols.iter_mut().zip(CSV_COLUMNS) {
            *slot = headers.iter().position(|h| h == name).ok_or_else(|| TrajectoryError::Parse {
                line: 1,
                message: format!("missing column `{name}`"),
            })?;
        }
        let mut points = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| TrajectoryError::Parse {
                line: e.position().map(|p| p.line()).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let mut vals = [T::zero(); 6];
            for (v, (&c, name)) in vals.iter_mut().zip(cols.iter().zip(CSV_COLUMNS)) {
                let raw = rec.get(c).ok_or_else(|| TrajectoryError::Parse {
                    line,
                    message: format!("missing field `{name}`"),
                })?;
                let parsed: f64 = raw.parse().map_err(|_| TrajectoryError::Parse {
                    line,
                    message: format!("invalid number `{raw}` in column `{name}`"),
                })?;
                *v = T::lit(parsed);
            }
            points.push(TrajectoryPoint {
                t: vals[0],
                x: vals[1],
                y: vals[2],
                v: vals[3],
                a: vals[4],
                heading: vals[5],
            });
        }
        Self::new(vehicle_id, points)
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self, TrajectoryError> {
        let path = path.as_ref();
        let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("vehicle").to_string();
        let file = std::fs::File::open(path)?;
        Self::read_csv(id, std::io::BufReader::new(file))
    }

    /// Writes the CSV format; numbers use the shortest round-trip representation.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", CSV_COLUMNS.join(","))?;
        for p in &self.points {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                p.t.as_f64(),
                p.x.as_f64(),
                p.y.as_f64(),
                p.v.as_f64(),
                p.a.as_f64(),
                p.heading.as_f64()
            )?;
        }
        Ok(())
    }
}

/// Ingests a trajectory CSV file.
pub fn ingest_trajectory_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<Trajectory<T>, TrajectoryError> {
    Trajectory::read_csv_path(path)
}
