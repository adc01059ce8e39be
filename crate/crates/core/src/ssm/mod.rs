//! Surrogate safety measures over a pair of synchronized trajectories.
//!
//! Vehicle `i` is the ego vehicle, `j` the conflicting one. Undefined
//! quantities (diverging vehicles, zero speeds) are `None`, never sentinels.

mod madr;
mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::{Trajectory, DT_TOLERANCE};
use crate::Scalar;

pub use madr::TruncatedNormal;
pub use report::{safety_report, ConflictGeometry, SafetyReport};

#[derive(Debug, Error, PartialEq)]
pub enum SsmError {
    #[error("distance must be positive for DRAC, got {0}")]
    DegenerateDistance(f64),
    #[error("trajectories share no common timestamps")]
    Alignment,
    #[error("empty or invalid window [{t_e}, {t_f}]")]
    Window { t_e: f64, t_f: f64 },
    #[error("invalid vehicle spec: {0}")]
    InvalidSpec(&'static str),
    #[error("conflict geometry series length {got} does not match trajectory length {expected}")]
    GeometryLength { expected: usize, got: usize },
}

/// Physical size and braking capability of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec<T> {
    pub radius: T,
    pub madr_mean: T,
    pub madr_std: T,
    pub madr_lower: T,
    pub madr_upper: T,
}

impl<T: Scalar> Default for VehicleSpec<T> {
    fn default() -> Self {
        Self {
            radius: T::lit(2.0),
            madr_mean: T::lit(8.45),
            madr_std: T::lit(1.40),
            madr_lower: T::lit(4.23),
            madr_upper: T::lit(12.68),
        }
    }
}

impl<T: Scalar> VehicleSpec<T> {
    pub fn validate(&self) -> Result<(), SsmError> {
        if !(self.radius > T::zero()) {
            return Err(SsmError::InvalidSpec("radius must be > 0"));
        }
        if !(self.madr_std > T::zero()) {
            return Err(SsmError::InvalidSpec("madr_std must be > 0"));
        }
        if !(self.madr_lower < self.madr_mean && self.madr_mean < self.madr_upper) {
            return Err(SsmError::InvalidSpec("need madr_lower < madr_mean < madr_upper"));
        }
        Ok(())
    }

    pub fn madr(&self) -> TruncatedNormal<T> {
        TruncatedNormal { mean: self.madr_mean, std: self.madr_std, lower: self.madr_lower, upper: self.madr_upper }
    }
}

/// Time-to-collision from a net distance and the two closing-speed components.
/// `None` when the vehicles are not closing.
pub fn ttc<T: Scalar>(net_distance: T, closing_speed_i: T, closing_speed_j: T) -> Option<T> {
    let closing = closing_speed_i + closing_speed_j;
    if closing <= T::zero() {
        return None;
    }
    Some(net_distance.max(T::zero()) / closing)
}

/// Signed time headway to the conflict point, `D_j/V_j − D_i/V_i`; positive
/// when vehicle `i` arrives first. `None` if either speed is not positive.
pub fn time_headway<T: Scalar>(dist_i: T, speed_i: T, dist_j: T, speed_j: T) -> Option<T> {
    if speed_i <= T::zero() || speed_j <= T::zero() {
        return None;
    }
    Some(dist_j / speed_j - dist_i / speed_i)
}

/// Deceleration rate to avoid the crash. Zero when `i` is not faster than `j`.
pub fn drac<T: Scalar>(speed_i: T, speed_j: T, distance: T) -> Result<T, SsmError> {
    if !(distance > T::zero()) {
        return Err(SsmError::DegenerateDistance(distance.as_f64()));
    }
    if speed_i <= speed_j {
        return Ok(T::zero());
    }
    let dv = speed_i - speed_j;
    Ok(dv * dv / (T::lit(2.0) * distance))
}

/// Probability that the required deceleration exceeds the vehicle's maximum
/// available deceleration.
pub fn madr_exceedance_prob<T: Scalar>(drac_value: T, spec: &VehicleSpec<T>) -> T {
    spec.madr().cdf(drac_value)
}

/// Samples falling in the half-open window `[t_e, t_f)`.
fn in_window<T: Scalar>(t: T, t_e: T, t_f: T, dt: T) -> bool {
    let eps = dt * T::lit(1e-6);
    t >= t_e - eps && t < t_f - eps
}

fn check_window<T: Scalar>(t_e: T, t_f: T, dt: T) -> Result<(), SsmError> {
    if !(t_f > t_e) || !(dt > T::zero()) {
        return Err(SsmError::Window { t_e: t_e.as_f64(), t_f: t_f.as_f64() });
    }
    Ok(())
}

/// Crash potential index over `[t_e, t_f)`: the time-weighted share of the
/// window during which DRAC is positive, weighted by the probability that it
/// exceeds MADR.
pub fn cpi<T: Scalar>(drac_series: &[(T, T)], spec: &VehicleSpec<T>, t_e: T, t_f: T, dt: T) -> Result<T, SsmError> {
    check_window(t_e, t_f, dt)?;
    let window: Vec<T> = drac_series.iter().filter(|(t, _)| in_window(*t, t_e, t_f, dt)).map(|&(_, d)| d).collect();
    if window.is_empty() {
        return Err(SsmError::Window { t_e: t_e.as_f64(), t_f: t_f.as_f64() });
    }
    let exposure: T = window
        .iter()
        .filter(|&&d| d > T::zero())
        .map(|&d| madr_exceedance_prob(d, spec) * dt)
        .sum();
    Ok((exposure / (t_f - t_e)).min(T::one()))
}

/// Acceleration noise: time-weighted RMS deviation of acceleration from its
/// window mean over `[t_e, t_f)`.
pub fn acceleration_noise<T: Scalar>(accels: &[(T, T)], t_e: T, t_f: T, dt: T) -> Result<T, SsmError> {
    check_window(t_e, t_f, dt)?;
    let window: Vec<T> = accels.iter().filter(|(t, _)| in_window(*t, t_e, t_f, dt)).map(|&(_, a)| a).collect();
    if window.len() < 2 {
        return Err(SsmError::Window { t_e: t_e.as_f64(), t_f: t_f.as_f64() });
    }
    let mean = window.iter().copied().sum::<T>() / T::count(window.len());
    let ss: T = window.iter().map(|&a| (a - mean) * (a - mean) * dt).sum();
    Ok((ss / (t_f - t_e)).sqrt())
}

/// Deceleration statistics over the braking period around the conflict point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrakingStats<T> {
    /// Mean of negative accelerations (≤ 0).
    pub avg_decel: T,
    /// Most negative acceleration (≤ 0).
    pub max_decel: T,
    /// Total time spent with negative acceleration.
    pub duration: T,
    pub window: [T; 2],
    pub braking: bool,
}

/// Half-width of the braking period around the conflict-point arrival (s).
pub const BRAKING_HALF_WINDOW: f64 = 2.0;

pub fn braking_stats<T: Scalar>(traj: &Trajectory<T>, t_collision_point: T) -> BrakingStats<T> {
    let half = T::lit(BRAKING_HALF_WINDOW);
    let end = traj.end_time().unwrap_or(t_collision_point);
    let window = [t_collision_point - half, (t_collision_point + half).min(end)];
    let eps = T::lit(DT_TOLERANCE);
    let braking: Vec<T> = traj
        .points
        .iter()
        .filter(|p| p.t >= window[0] - eps && p.t <= window[1] + eps && p.a < T::zero())
        .map(|p| p.a)
        .collect();
    if braking.is_empty() {
        return BrakingStats { avg_decel: T::zero(), max_decel: T::zero(), duration: T::zero(), window, braking: false };
    }
    let avg = braking.iter().copied().sum::<T>() / T::count(braking.len());
    let max = braking.iter().copied().fold(T::zero(), T::min);
    BrakingStats { avg_decel: avg, max_decel: max, duration: T::count(braking.len()) * traj.dt, window, braking: true }
}

/// One aligned sample of the TTC series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TtcSample<T> {
    pub t: T,
    /// Index into the `i` and `j` trajectories.
    pub index_i: usize,
    pub index_j: usize,
    pub center_distance: T,
    /// Center distance minus both radii, clamped at zero.
    pub net_distance: T,
    /// Speed of `i` projected on the line of sight toward `j`.
    pub closing_i: T,
    /// Speed of `j` projected on the line of sight toward `i`.
    pub closing_j: T,
    pub ttc: Option<T>,
}

impl<T: Scalar> TtcSample<T> {
    pub fn in_contact(&self) -> bool {
        self.net_distance <= T::zero()
    }

    /// DRAC of `i` along the line of sight: the closing rate stands in for the
    /// speed differential. Infinite on contact while closing.
    pub fn drac(&self) -> T {
        let closing = self.closing_i + self.closing_j;
        if closing <= T::zero() {
            return T::zero();
        }
        drac(self.closing_i, -self.closing_j, self.net_distance).unwrap_or(T::infinity())
    }
}

/// Index pairs of samples sharing a timestamp.
pub fn align<T: Scalar>(traj_i: &Trajectory<T>, traj_j: &Trajectory<T>) -> Vec<(usize, usize)> {
    traj_i
        .points
        .iter()
        .enumerate()
        .filter_map(|(ii, p)| traj_j.index_at(p.t).map(|jj| (ii, jj)))
        .collect()
}

/// Per-sample TTC with line-of-sight closing speeds. Samples in contact report
/// a TTC of zero; diverging samples report `None`.
pub fn ttc_series<T: Scalar>(
    traj_i: &Trajectory<T>,
    traj_j: &Trajectory<T>,
    spec_i: &VehicleSpec<T>,
    spec_j: &VehicleSpec<T>,
) -> Result<Vec<TtcSample<T>>, SsmError> {
    let pairs = align(traj_i, traj_j);
    if pairs.is_empty() {
        return Err(SsmError::Alignment);
    }
    let radii = spec_i.radius + spec_j.radius;
    Ok(pairs
        .into_iter()
        .map(|(ii, jj)| {
            let pi = traj_i.points[ii];
            let pj = traj_j.points[jj];
            let dx = pj.x - pi.x;
            let dy = pj.y - pi.y;
            let center = dx.hypot(dy);
            let net = (center - radii).max(T::zero());
            let (closing_i, closing_j) = if center > T::zero() {
                let (ux, uy) = (dx / center, dy / center);
                let vi = pi.velocity();
                let vj = pj.velocity();
                (vi[0] * ux + vi[1] * uy, -(vj[0] * ux + vj[1] * uy))
            } else {
                (pi.v, pj.v)
            };
            let ttc = if net <= T::zero() { Some(T::zero()) } else { ttc(net, closing_i, closing_j) };
            TtcSample { t: pi.t, index_i: ii, index_j: jj, center_distance: center, net_distance: net, closing_i, closing_j, ttc }
        })
        .collect())
}
