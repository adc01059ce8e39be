//! Fixation logs and the eye-movement features derived from them.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error)]
pub enum GazeError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("record {index}: {message}")]
    Invalid { index: usize, message: String },
    #[error("no fixation intersects the window [{t0}, {t1}]")]
    NoData { t0: f64, t1: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Area of interest a fixation lands on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Aoi {
    AggressiveVehicle,
    SpeedInfo,
    WarningInfo,
    RoadAhead,
}

impl Aoi {
    pub const ALL: [Aoi; 4] = [Aoi::AggressiveVehicle, Aoi::SpeedInfo, Aoi::WarningInfo, Aoi::RoadAhead];

    pub fn name(self) -> &'static str {
        match self {
            Aoi::AggressiveVehicle => "AggressiveVehicle",
            Aoi::SpeedInfo => "SpeedInfo",
            Aoi::WarningInfo => "WarningInfo",
            Aoi::RoadAhead => "RoadAhead",
        }
    }
}

impl fmt::Display for Aoi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Aoi {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Aoi::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| format!("unknown AOI `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixationRecord<T> {
    pub t_start: T,
    pub t_end: T,
    pub aoi: Aoi,
    /// Pupil diameters in eye-tracker pixels.
    pub pupil_left: T,
    pub pupil_right: T,
}

impl<T: Scalar> FixationRecord<T> {
    pub fn duration(&self) -> T {
        self.t_end - self.t_start
    }

    /// Portion of the fixation inside `[t0, t1]`.
    pub fn clipped_duration(&self, t0: T, t1: T) -> T {
        (self.t_end.min(t1) - self.t_start.max(t0)).max(T::zero())
    }

    fn intersects(&self, t0: T, t1: T) -> bool {
        self.t_start < t1 && self.t_end > t0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeLog<T> {
    pub trial_id: String,
    pub records: Vec<FixationRecord<T>>,
}

impl<T: Scalar> GazeLog<T> {
    pub fn new(trial_id: impl Into<String>, records: Vec<FixationRecord<T>>) -> Result<Self, GazeError> {
        let log = Self { trial_id: trial_id.into(), records };
        log.validate()?;
        Ok(log)
    }

    pub fn validate(&self) -> Result<(), GazeError> {
        for (index, r) in self.records.iter().enumerate() {
            let invalid = |message: &str| GazeError::Invalid { index, message: message.to_string() };
            if !(r.t_start.is_finite() && r.t_end.is_finite()) {
                return Err(invalid("non-finite time"));
            }
            if !(r.t_end > r.t_start) {
                return Err(invalid("t_end must exceed t_start"));
            }
            if !(r.pupil_left > T::zero() && r.pupil_right > T::zero()) {
                return Err(invalid("pupil diameters must be positive"));
            }
            if index > 0 && r.t_start < self.records[index - 1].t_end {
                return Err(invalid("overlaps or precedes the previous record"));
            }
        }
        Ok(())
    }

    /// Parse `t_start,t_end,aoi,pupil_left,pupil_right`.
    pub fn read_csv<R: Read>(trial_id: impl Into<String>, reader: R) -> Result<Self, GazeError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| GazeError::Parse { line: 1, message: e.to_string() })?.clone();
        let cols = ["t_start", "t_end", "aoi", "pupil_left", "pupil_right"];
        let mut idx = [0usize; 5];
        for (k, name) in cols.iter().enumerate() {
            idx[k] = header
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| GazeError::Parse { line: 1, message: format!("missing column `{name}`") })?;
        }
        let mut records = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let line = row + 2;
            let rec = rec.map_err(|e| GazeError::Parse { line, message: e.to_string() })?;
            let field = |k: usize| rec.get(idx[k]).unwrap_or("");
            let num = |k: usize| -> Result<T, GazeError> {
                field(k)
                    .parse::<f64>()
                    .map(T::lit)
                    .map_err(|_| GazeError::Parse { line, message: format!("bad {} `{}`", cols[k], field(k)) })
            };
            let aoi = field(2).parse::<Aoi>().map_err(|message| GazeError::Parse { line, message })?;
            records.push(FixationRecord { t_start: num(0)?, t_end: num(1)?, aoi, pupil_left: num(3)?, pupil_right: num(4)? });
        }
        Self::new(trial_id, records)
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self, GazeError> {
        let path = path.as_ref();
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::read_csv(id, std::fs::File::open(path)?)
    }

    fn in_window(&self, t0: T, t1: T) -> impl Iterator<Item = &FixationRecord<T>> {
        self.records.iter().filter(move |r| r.intersects(t0, t1))
    }
}

/// Average of the per-eye minimum pupil diameter over fixations touching the window.
pub fn mean_pupil_diameter<T: Scalar>(log: &GazeLog<T>, window: [T; 2]) -> Result<T, GazeError> {
    let [t0, t1] = window;
    let mut mins: Option<(T, T)> = None;
    for r in log.in_window(t0, t1) {
        mins = Some(match mins {
            None => (r.pupil_left, r.pupil_right),
            Some((l, rr)) => (l.min(r.pupil_left), rr.min(r.pupil_right)),
        });
    }
    let (l, r) = mins.ok_or(GazeError::NoData { t0: t0.as_f64(), t1: t1.as_f64() })?;
    Ok((l + r) / T::lit(2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixationFeatures<T> {
    /// Total fixation duration, clipped to the window.
    pub total_duration: T,
    pub count: usize,
    /// `total_duration / count`; `None` without matching fixations.
    pub mean_duration: Option<T>,
}

pub fn fixation_features<T: Scalar>(log: &GazeLog<T>, window: [T; 2], aoi: Aoi) -> FixationFeatures<T> {
    let [t0, t1] = window;
    let (total, count) = log
        .in_window(t0, t1)
        .filter(|r| r.aoi == aoi)
        .fold((T::zero(), 0usize), |(sum, n), r| (sum + r.clipped_duration(t0, t1), n + 1));
    FixationFeatures {
        total_duration: total,
        count,
        mean_duration: (count > 0).then(|| total / T::count(count)),
    }
}
