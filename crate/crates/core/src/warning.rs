//! Infrastructure-side collision prediction and warning emission.

use serde::{Deserialize, Serialize};

use crate::scenario::{PathGeometry, WarningLead};
use crate::ssm::VehicleSpec;
use crate::trajectory::TrajectoryPoint;

/// How far ahead collisions are predicted (s).
pub const PREDICTION_HORIZON: f64 = 10.0;
const SCAN_STEP: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarningEvent {
    pub t_issue: f64,
    pub t_predicted_collision: f64,
    pub lead: f64,
    pub ego_state_at_issue: TrajectoryPoint<f64>,
    pub aggressive_state_at_issue: TrajectoryPoint<f64>,
}

/// A vehicle's position along its path and its current speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathState {
    pub s: f64,
    pub v: f64,
}

/// Earliest `τ ∈ [0, horizon]` at which the two vehicles, each holding its
/// speed along its own path, come within `contact_distance` center to center.
pub fn time_to_predicted_contact(
    geometry: &PathGeometry,
    ego: PathState,
    agg: PathState,
    contact_distance: f64,
    horizon: f64,
) -> Option<f64> {
    let gap = |tau: f64| {
        let a = geometry.ego_path.point_at(ego.s + ego.v * tau);
        let b = geometry.aggressive_path.point_at(agg.s + agg.v * tau);
        (a[0] - b[0]).hypot(a[1] - b[1]) - contact_distance
    };
    if gap(0.0) <= 0.0 {
        return Some(0.0);
    }
    let steps = (horizon / SCAN_STEP).ceil() as usize;
    let mut prev = 0.0;
    for k in 1..=steps {
        let tau = (k as f64 * SCAN_STEP).min(horizon);
        if gap(tau) <= 0.0 {
            let (mut lo, mut hi) = (prev, tau);
            for _ in 0..48 {
                let mid = 0.5 * (lo + hi);
                if gap(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(hi);
        }
        prev = tau;
    }
    None
}

/// Absolute predicted collision time for two observed states, or `None` when
/// constant-speed extrapolation keeps them apart for the whole horizon.
pub fn predict_collision_time(
    ego: &TrajectoryPoint<f64>,
    agg: &TrajectoryPoint<f64>,
    geometry: &PathGeometry,
    specs: (&VehicleSpec<f64>, &VehicleSpec<f64>),
) -> Option<f64> {
    let e = PathState { s: geometry.ego_path.project([ego.x, ego.y]), v: ego.v };
    let a = PathState { s: geometry.aggressive_path.project([agg.x, agg.y]), v: agg.v };
    time_to_predicted_contact(geometry, e, a, specs.0.radius + specs.1.radius, PREDICTION_HORIZON).map(|tau| ego.t + tau)
}

/// Per-trial warning state: issues at most one warning, at the first step
/// where the predicted collision is no more than `lead` seconds away.
#[derive(Debug, Clone)]
pub struct Monitor {
    lead: Option<f64>,
    emitted: bool,
}

impl Monitor {
    pub fn new(lead: WarningLead) -> Self {
        Self { lead: lead.seconds(), emitted: false }
    }

    pub fn emitted(&self) -> bool {
        self.emitted
    }

    pub fn observe(
        &mut self,
        now: f64,
        predicted: Option<f64>,
        ego: &TrajectoryPoint<f64>,
        agg: &TrajectoryPoint<f64>,
    ) -> Option<WarningEvent> {
        let lead = self.lead?;
        if self.emitted {
            return None;
        }
        let t_c = predicted?;
        if t_c - now > lead + 1e-9 {
            return None;
        }
        self.emitted = true;
        Some(WarningEvent {
            t_issue: now,
            t_predicted_collision: t_c,
            lead,
            ego_state_at_issue: *ego,
            aggressive_state_at_issue: *agg,
        })
    }
}
