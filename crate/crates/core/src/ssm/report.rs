use serde::{Deserialize, Serialize};

use super::{acceleration_noise, braking_stats, cpi, ttc_series, SsmError, VehicleSpec};
use crate::trajectory::Trajectory;
use crate::Scalar;

/// Conflict point plus each vehicle's along-path distance to it, one entry per
/// trajectory sample. Distances go negative once the point has been passed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictGeometry<T> {
    pub conflict_point: [T; 2],
    pub dist_to_conflict_i: Vec<T>,
    pub dist_to_conflict_j: Vec<T>,
}

/// Per-trial metric bundle. Fields that depend on a finite minimum TTC are
/// `None` when no such minimum exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyReport<T> {
    pub min_ttc: Option<T>,
    pub t_min_ttc: Option<T>,
    pub max_drac: Option<T>,
    pub cpi: Option<T>,
    pub an: Option<T>,
    pub max_decel: T,
    pub avg_decel: T,
    pub braking_window: [T; 2],
    pub braking_duration: T,
    pub braking: bool,
    pub collision: bool,
}

impl<T: Scalar> SafetyReport<T> {
    pub const CSV_HEADER: [&'static str; 12] = [
        "min_ttc",
        "t_min_ttc",
        "max_drac",
        "cpi",
        "an",
        "max_decel",
        "avg_decel",
        "braking_window_start",
        "braking_window_end",
        "braking_duration",
        "braking",
        "collision",
    ];

    /// Values in `CSV_HEADER` order; absent values are empty strings.
    pub fn csv_fields(&self) -> Vec<String> {
        let opt = |v: Option<T>| v.map(|x| x.as_f64().to_string()).unwrap_or_default();
        let num = |v: T| v.as_f64().to_string();
        vec![
            opt(self.min_ttc),
            opt(self.t_min_ttc),
            opt(self.max_drac),
            opt(self.cpi),
            opt(self.an),
            num(self.max_decel),
            num(self.avg_decel),
            num(self.braking_window[0]),
            num(self.braking_window[1]),
            num(self.braking_duration),
            self.braking.to_string(),
            self.collision.to_string(),
        ]
    }
}

/// Full metric suite for ego `i` against conflicting vehicle `j`, with the
/// exposure window starting at `t_e` (ego roundabout entry) and ending at the
/// minimum-TTC instant.
pub fn safety_report<T: Scalar>(
    traj_i: &Trajectory<T>,
    traj_j: &Trajectory<T>,
    spec_i: &VehicleSpec<T>,
    spec_j: &VehicleSpec<T>,
    geometry: &ConflictGeometry<T>,
    t_e: T,
) -> Result<SafetyReport<T>, SsmError> {
    spec_i.validate()?;
    spec_j.validate()?;
    if geometry.dist_to_conflict_i.len() != traj_i.len() {
        return Err(SsmError::GeometryLength { expected: traj_i.len(), got: geometry.dist_to_conflict_i.len() });
    }
    if geometry.dist_to_conflict_j.len() != traj_j.len() {
        return Err(SsmError::GeometryLength { expected: traj_j.len(), got: geometry.dist_to_conflict_j.len() });
    }
    let series = ttc_series(traj_i, traj_j, spec_i, spec_j)?;
    let dt = traj_i.dt;

    let contact = series.iter().find(|s| s.in_contact());
    let collision = contact.is_some();

    let mut min: Option<(T, T)> = None;
    for s in &series {
        if let Some(v) = s.ttc {
            if min.map_or(true, |(m, _)| v < m) {
                min = Some((v, s.t));
            }
        }
    }

    // The braking period is centered on the instant the ego vehicle is
    // closest to colliding: the minimum-TTC sample, else its arrival at the
    // conflict point.
    let t_cp = min
        .map(|(_, t)| t)
        .or_else(|| {
            traj_i
                .points
                .iter()
                .zip(&geometry.dist_to_conflict_i)
                .find(|(_, &d)| d <= T::zero())
                .map(|(p, _)| p.t)
        })
        .or(traj_i.end_time())
        .unwrap_or(t_e);
    let braking = braking_stats(traj_i, t_cp);

    let (cpi_v, max_drac, an) = match min {
        None => (Some(T::zero()), Some(T::zero()), None),
        Some((_, t_f)) if t_f <= t_e => (None, None, None),
        Some((_, t_f)) => {
            let drac: Vec<(T, T)> = series.iter().map(|s| (s.t, s.drac())).collect();
            let eps = dt * T::lit(1e-6);
            let max_drac = drac
                .iter()
                .filter(|(t, d)| *t >= t_e - eps && *t <= t_f + eps && d.is_finite())
                .map(|&(_, d)| d)
                .fold(T::zero(), T::max);
            let cpi_v = cpi(&drac, spec_i, t_e, t_f, dt).ok();
            let an = acceleration_noise(&traj_i.accelerations(), t_e, t_f, dt).ok();
            (cpi_v, Some(max_drac), an)
        }
    };

    Ok(SafetyReport {
        min_ttc: min.map(|(v, _)| v),
        t_min_ttc: min.map(|(_, t)| t),
        max_drac,
        cpi: cpi_v,
        an,
        max_decel: braking.max_decel,
        avg_decel: braking.avg_decel,
        braking_window: braking.window,
        braking_duration: braking.duration,
        braking: braking.braking,
        collision,
    })
}
