use serde::{Deserialize, Serialize};

use super::{Aggressiveness, Cue, Decision, DriverModel, PathGeometry, Reaction, ScenarioConfig, ScenarioError, StopGo, TrialResult};
use crate::ssm::time_headway;
use crate::trajectory::{Trajectory, TrajectoryPoint};
use crate::warning::{time_to_predicted_contact, Monitor, PathState, PREDICTION_HORIZON};

/// Gain of the aggressive vehicle's speed tracking (1/s).
const AGG_GAIN: f64 = 2.0;
/// Time the ego vehicle keeps being simulated after reaching the conflict
/// point, so the braking window is fully covered (s).
const POST_CONFLICT: f64 = 2.0;

#[derive(Debug, Clone, Copy)]
struct Kin {
    s: f64,
    v: f64,
}

impl Kin {
    /// Applied acceleration over one step once speed is clamped at zero.
    fn effective(&self, a: f64, dt: f64) -> f64 {
        ((self.v + a * dt).max(0.0) - self.v) / dt
    }

    /// Trapezoidal position update.
    fn advance(&mut self, a: f64, dt: f64) {
        let v1 = self.v + a * dt;
        self.s += 0.5 * (self.v + v1) * dt;
        self.v = v1.max(0.0);
    }
}

fn track(d: &DriverModel, target: f64, v: f64, feedforward: f64) -> f64 {
    (d.speed_gain * (target - v) + feedforward).clamp(d.tracking_decel_max, d.tracking_accel_max)
}

/// Speed-limit following: approach limit, shedding speed ahead of the entry so
/// the circulating limit holds inside the roundabout.
fn limit_following(d: &DriverModel, g: &PathGeometry, k: Kin) -> f64 {
    if k.s >= g.roundabout_entry_s_ego {
        return track(d, d.circulating_speed_limit, k.v, 0.0);
    }
    let remaining = g.roundabout_entry_s_ego - k.s;
    let curve = (d.circulating_speed_limit.powi(2) + 2.0 * d.anticipation_decel * remaining).sqrt();
    if curve < d.approach_speed_limit {
        track(d, curve, k.v, -d.anticipation_decel)
    } else {
        track(d, d.approach_speed_limit, k.v, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum AggPhase {
    Approach,
    Stopped,
    Entered,
}

struct Aggressor<'a> {
    cfg: &'a ScenarioConfig,
    g: &'a PathGeometry,
    phase: AggPhase,
}

impl Aggressor<'_> {
    /// Acceleration for the current step. `ego_s` releases a yielding vehicle.
    fn accel(&mut self, k: Kin, ego_s: f64) -> f64 {
        let m = &self.cfg.aggressive;
        let dt = self.cfg.dt;
        let yields = self.cfg.aggressiveness == Aggressiveness::Low;
        if self.phase == AggPhase::Approach && k.s >= self.g.yield_s_agg {
            self.phase = if yields { AggPhase::Stopped } else { AggPhase::Entered };
        }
        match self.phase {
            AggPhase::Entered if k.s < self.g.conflict_s_agg + m.merge_hold && !yields => {
                (AGG_GAIN * (m.entry_speed - k.v)).clamp(-m.decel, m.accel)
            }
            AggPhase::Entered => (AGG_GAIN * (m.circulating_speed - k.v)).clamp(-m.decel, m.accel),
            AggPhase::Stopped if k.v > 0.0 => -k.v / dt,
            AggPhase::Stopped => {
                if ego_s >= self.g.conflict_s_ego + m.clearance {
                    self.phase = AggPhase::Entered;
                    (AGG_GAIN * (m.circulating_speed - k.v)).clamp(-m.decel, m.accel)
                } else {
                    0.0
                }
            }
            AggPhase::Approach => {
                let remaining = self.g.yield_s_agg - k.s;
                if yields && (remaining <= 0.5 * k.v * dt + 1e-6 || (remaining < 0.3 && k.v < 0.1)) {
                    self.phase = AggPhase::Stopped;
                    return -k.v / dt;
                }
                let floor = if yields { 0.0 } else { m.entry_speed };
                let curve = (floor * floor + 2.0 * m.decel * remaining).sqrt();
                let (target, ff) = if curve < m.cruise_speed { (curve, -m.decel) } else { (m.cruise_speed, 0.0) };
                (AGG_GAIN * (target - k.v) + ff).clamp(-2.0 * m.decel, m.accel)
            }
        }
    }
}

fn max_steps(cfg: &ScenarioConfig) -> usize {
    (cfg.max_duration / cfg.dt).round() as usize
}

/// Ego states of the unperturbed run (driver never reacting), one per step.
fn nominal_ego(cfg: &ScenarioConfig, g: &PathGeometry) -> Vec<Kin> {
    let mut k = Kin { s: 0.0, v: cfg.driver.approach_speed_limit };
    let mut out = Vec::new();
    for _ in 0..=max_steps(cfg) {
        out.push(k);
        let a = limit_following(&cfg.driver, g, k);
        let a = k.effective(a, cfg.dt);
        k.advance(a, cfg.dt);
    }
    out
}

fn crossing_time(states: &[Kin], s: f64, dt: f64) -> Option<f64> {
    let k = states.iter().position(|st| st.s >= s)?;
    if k == 0 {
        return Some(0.0);
    }
    let (a, b) = (states[k - 1], states[k]);
    Some((k as f64 - 1.0 + (s - a.s) / (b.s - a.s)) * dt)
}

/// Time at which the unperturbed ego vehicle reaches the conflict point.
pub fn nominal_ego_arrival(cfg: &ScenarioConfig) -> Result<f64, ScenarioError> {
    let g = cfg.path_geometry()?;
    crossing_time(&nominal_ego(cfg, &g), g.conflict_s_ego, cfg.dt)
        .ok_or_else(|| ScenarioError::Scheduling("ego vehicle never reaches the conflict point".into()))
}

/// Launch state of the aggressive vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggressiveSchedule {
    /// Arclength at which the aggressive vehicle starts, at cruise speed.
    pub start_s: f64,
    /// Step time at which it crosses the yield line (or comes to rest there).
    pub entry_time: f64,
    /// Signed headway at that instant with both vehicles unreactive.
    pub headway: Option<f64>,
}

/// Aggressive vehicle on its own; the ego vehicle only matters to release a
/// yielding aggressor, which happens after the entry instant.
fn probe_aggressor(cfg: &ScenarioConfig, g: &PathGeometry, start_s: f64, ego: &[Kin]) -> Option<(usize, Kin)> {
    let mut agg = Aggressor { cfg, g, phase: AggPhase::Approach };
    let mut k = Kin { s: start_s, v: cfg.aggressive.cruise_speed };
    for step in 0..ego.len() {
        let a = agg.accel(k, ego[step].s);
        let entered = match cfg.aggressiveness {
            Aggressiveness::Low => agg.phase == AggPhase::Stopped,
            _ => agg.phase == AggPhase::Entered,
        };
        if entered {
            return Some((step, k));
        }
        let a = k.effective(a, cfg.dt);
        k.advance(a, cfg.dt);
    }
    None
}

fn bisect(mut lo: f64, mut hi: f64, mut f: impl FnMut(f64) -> Option<f64>) -> Option<f64> {
    // f is non-increasing with a root in [lo, hi]
    let mut best: Option<(f64, f64)> = None;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let v = f(mid)?;
        if best.map_or(true, |(_, b)| v.abs() < b.abs()) {
            best = Some((mid, v));
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best.map(|(x, _)| x)
}

/// Chooses where the aggressive vehicle starts. Medium and High: the signed
/// headway (positive when the ego vehicle leads) at the aggressive vehicle's
/// yield-line crossing equals minus the level's target, with both vehicles
/// unreactive. Low: the aggressive vehicle comes to rest at the yield line a
/// fixed lead before the ego vehicle's nominal arrival.
pub fn schedule_aggressive(cfg: &ScenarioConfig) -> Result<AggressiveSchedule, ScenarioError> {
    let g = cfg.path_geometry()?;
    let ego = nominal_ego(cfg, &g);
    let arrival = crossing_time(&ego, g.conflict_s_ego, cfg.dt)
        .ok_or_else(|| ScenarioError::Scheduling("ego vehicle never reaches the conflict point".into()))?;
    let dt = cfg.dt;
    let hi = g.yield_s_agg - 0.5;
    let headway_at = |step: usize, k: Kin| {
        let e = ego[step.min(ego.len() - 1)];
        time_headway(g.conflict_s_ego - e.s, e.v, g.conflict_s_agg - k.s, k.v)
    };
    match cfg.aggressiveness.target_headway() {
        Some(target) => {
            let err = |s0: f64| probe_aggressor(cfg, &g, s0, &ego).and_then(|(step, k)| headway_at(step, k)).map(|h| h + target);
            let (e_lo, e_hi) = (err(0.0), err(hi));
            if !matches!((e_lo, e_hi), (Some(a), Some(b)) if a >= 0.0 && b <= 0.0) {
                return Err(ScenarioError::Scheduling(format!(
                    "headway -{target} s is not reachable with the configured approach length and speeds"
                )));
            }
            let s0 = bisect(0.0, hi, err).ok_or_else(|| ScenarioError::Scheduling("bisection failed".into()))?;
            let (step, k) = probe_aggressor(cfg, &g, s0, &ego).expect("probed above");
            let h = headway_at(step, k).expect("probed above");
            if (h + target).abs() > 0.05 {
                return Err(ScenarioError::Scheduling(format!("realized headway {h:.3} s misses -{target} s")));
            }
            Ok(AggressiveSchedule { start_s: s0, entry_time: step as f64 * dt, headway: Some(h) })
        }
        None => {
            let wanted = arrival - cfg.aggressive.yield_stop_lead;
            let err = |s0: f64| probe_aggressor(cfg, &g, s0, &ego).map(|(step, _)| step as f64 * dt - wanted);
            let (e_lo, e_hi) = (err(0.0), err(hi));
            if !matches!((e_lo, e_hi), (Some(a), Some(b)) if a >= 0.0 && b <= 0.0) {
                return Err(ScenarioError::Scheduling("yielding stop time is not reachable".into()));
            }
            let s0 = bisect(0.0, hi, err).ok_or_else(|| ScenarioError::Scheduling("bisection failed".into()))?;
            let (step, _) = probe_aggressor(cfg, &g, s0, &ego).expect("probed above");
            Ok(AggressiveSchedule { start_s: s0, entry_time: step as f64 * dt, headway: None })
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Response {
    t: f64,
    decision: StopGo,
    peak: f64,
    length: f64,
    braking_done: bool,
}

fn urgency_peak(d: &DriverModel, time_to_contact: Option<f64>) -> f64 {
    let (comf, emerg) = (-d.comfortable_decel, -d.emergency_decel);
    match time_to_contact {
        None => 0.0,
        Some(tau) => (emerg - d.urgency_slope * (tau - d.urgency_floor).max(0.0)).clamp(comf, emerg),
    }
}

fn center_distance(g: &PathGeometry, s_ego: f64, s_agg: f64) -> f64 {
    let a = g.ego_path.point_at(s_ego);
    let b = g.aggressive_path.point_at(s_agg);
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn point(g_path: &super::Polyline, t: f64, k: Kin, a: f64) -> TrajectoryPoint<f64> {
    let ([x, y], heading) = g_path.pose_at(k.s);
    TrajectoryPoint { t, x, y, v: k.v, a, heading }
}

/// Time-steps both vehicles until both are past the conflict point (and the
/// ego braking window is covered), they touch, or `max_duration` elapses.
pub fn simulate_trial(cfg: &ScenarioConfig) -> Result<TrialResult, ScenarioError> {
    cfg.validate()?;
    let g = cfg.path_geometry()?;
    let schedule = schedule_aggressive(cfg)?;
    let d = &cfg.driver;
    let dt = cfg.dt;
    let radii = cfg.ego_vehicle.radius + cfg.aggressive_vehicle.radius;

    let mut ego = Kin { s: 0.0, v: d.approach_speed_limit };
    let mut agg = Kin { s: schedule.start_s, v: cfg.aggressive.cruise_speed };
    let mut aggressor = Aggressor { cfg, g: &g, phase: AggPhase::Approach };
    let mut monitor = Monitor::new(cfg.warning_lead);

    let mut ego_pts = Vec::new();
    let mut agg_pts = Vec::new();
    let mut ego_s = Vec::new();
    let mut agg_s = Vec::new();
    let mut warning = None;
    let mut visual: Option<f64> = None;
    let mut response: Option<Response> = None;
    let mut reaction: Option<Reaction> = None;
    let mut collision = false;
    let mut entry_time = None;
    let mut ego_conflict_time: Option<f64> = None;
    let mut agg_conflict_time: Option<f64> = None;
    let mut a_prev = 0.0;

    for step in 0..=max_steps(cfg) {
        let t = step as f64 * dt;
        let dist_i = g.conflict_s_ego - ego.s;
        let dist_j = g.conflict_s_agg - agg.s;
        if entry_time.is_none() && ego.s >= g.roundabout_entry_s_ego {
            entry_time = Some(t);
        }
        if ego_conflict_time.is_none() && dist_i <= 0.0 {
            ego_conflict_time = Some(t);
        }
        if agg_conflict_time.is_none() && dist_j <= 0.0 {
            agg_conflict_time = Some(t);
        }

        if center_distance(&g, ego.s, agg.s) <= radii {
            collision = true;
            ego_pts.push(point(&g.ego_path, t, ego, a_prev));
            agg_pts.push(point(&g.aggressive_path, t, agg, 0.0));
            ego_s.push(ego.s);
            agg_s.push(agg.s);
            break;
        }

        // the conflict lasts while the ego vehicle is upstream or still behind
        // the aggressive vehicle on the shared arc
        let active = dist_i > 0.0 || (-dist_i < g.shared_length && -dist_i < -dist_j);
        let prediction = active
            .then(|| time_to_predicted_contact(&g, PathState { s: ego.s, v: ego.v }, PathState { s: agg.s, v: agg.v }, radii, PREDICTION_HORIZON))
            .flatten();

        let a_agg = aggressor.accel(agg, ego.s);
        if visual.is_none() && prediction.is_some_and(|tau| tau <= d.visual_ttc) {
            visual = Some(t);
        }

        // states as observed at this step; accelerations are filled in below
        let ego_pt = point(&g.ego_path, t, ego, 0.0);
        let agg_pt = point(&g.aggressive_path, t, agg, 0.0);
        if active {
            if let Some(w) = monitor.observe(t, prediction.map(|tau| t + tau), &ego_pt, &agg_pt) {
                warning = Some(w);
            }
        }

        if response.is_none() && active {
            let warned = warning.as_ref().map(|w: &crate::warning::WarningEvent| w.t_issue + cfg.warning_latency);
            let cue = match (warned, visual) {
                (Some(w), Some(v)) if v < w => Some((v, Cue::Visual)),
                (Some(w), _) => Some((w, Cue::Warning)),
                (None, Some(v)) => Some((v, Cue::Visual)),
                (None, None) => None,
            };
            if let Some((t_cue, cue)) = cue {
                if t + 1e-9 >= t_cue + d.reaction_time {
                    let decision = match d.decision {
                        Decision::Stop => StopGo::Stop,
                        Decision::Go => StopGo::Go,
                        Decision::Threshold { headway } => match time_headway(dist_i, ego.v, dist_j, agg.v) {
                            Some(h) if h >= headway => StopGo::Go,
                            _ => StopGo::Stop,
                        },
                    };
                    let peak = if decision == StopGo::Stop { urgency_peak(d, prediction) } else { 0.0 };
                    let length = prediction.map_or(d.min_braking, |tau| (d.braking_spread * tau).max(d.min_braking));
                    response = Some(Response { t, decision, peak, length, braking_done: false });
                    reaction = Some(Reaction { t, cue, decision, peak_decel: peak });
                }
            }
        }

        let a_ego = match response.as_mut() {
            None => limit_following(d, &g, ego),
            Some(r) if r.decision == StopGo::Go => {
                if dist_i < -cfg.aggressive.clearance {
                    limit_following(d, &g, ego)
                } else {
                    let cap = d.circulating_speed_limit * d.go_speed_factor;
                    if ego.v < cap {
                        d.go_accel.min((cap - ego.v) / dt)
                    } else {
                        track(d, cap, ego.v, 0.0)
                    }
                }
            }
            Some(r) => {
                if r.braking_done || !active {
                    r.braking_done = true;
                    limit_following(d, &g, ego)
                } else {
                    // ramp up to the peak, then release exponentially
                    let since = t - r.t;
                    if since >= r.length {
                        r.braking_done = true;
                        limit_following(d, &g, ego)
                    } else if since < d.decel_ramp {
                        -r.peak * since.max(dt) / d.decel_ramp
                    } else {
                        -r.peak * (-(since - d.decel_ramp) / d.peak_decay).exp()
                    }
                }
            }
        };

        let a_ego = ego.effective(a_ego, dt);
        let a_agg = agg.effective(a_agg, dt);
        ego_pts.push(TrajectoryPoint { a: a_ego, ..ego_pt });
        agg_pts.push(TrajectoryPoint { a: a_agg, ..agg_pt });
        ego_s.push(ego.s);
        agg_s.push(agg.s);
        a_prev = a_ego;

        let done = match (ego_conflict_time, agg_conflict_time) {
            (Some(te), Some(_)) => {
                dist_i <= -cfg.aggressive.clearance && t >= te + POST_CONFLICT - 1e-9 && prediction.is_none()
            }
            _ => false,
        };
        if done {
            return finish(cfg, schedule, ego_pts, agg_pts, ego_s, agg_s, warning, reaction, collision, entry_time, ego_conflict_time);
        }
        ego.advance(a_ego, dt);
        agg.advance(a_agg, dt);
    }
    if collision {
        return finish(cfg, schedule, ego_pts, agg_pts, ego_s, agg_s, warning, reaction, collision, entry_time, ego_conflict_time);
    }
    Err(ScenarioError::Timeout(cfg.max_duration))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    cfg: &ScenarioConfig,
    schedule: AggressiveSchedule,
    ego_pts: Vec<TrajectoryPoint<f64>>,
    agg_pts: Vec<TrajectoryPoint<f64>>,
    ego_s: Vec<f64>,
    aggressive_s: Vec<f64>,
    warning: Option<crate::warning::WarningEvent>,
    reaction: Option<Reaction>,
    collision: bool,
    roundabout_entry_time: Option<f64>,
    ego_conflict_time: Option<f64>,
) -> Result<TrialResult, ScenarioError> {
    let build = |id: &str, pts| Trajectory::new(id, pts).map_err(|e| ScenarioError::Config(e.to_string()));
    Ok(TrialResult {
        config: cfg.clone(),
        repeat: 0,
        ego: build("ego", ego_pts)?,
        aggressive: build("aggressive", agg_pts)?,
        ego_s,
        aggressive_s,
        warning,
        reaction,
        collision,
        roundabout_entry_time,
        ego_conflict_time,
        scheduled_headway: schedule.headway,
    })
}
