//! Kinematic two-vehicle merging conflict: configuration, aggressive-vehicle
//! scheduling, the ego driver model and the 3 × 3 design sweep.

mod geometry;
mod sim;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ssm::{safety_report, ConflictGeometry, SafetyReport, SsmError, VehicleSpec};
use crate::trajectory::Trajectory;
use crate::warning::WarningEvent;

pub use geometry::{GeometryConfig, PathGeometry, Polyline};
pub use sim::{nominal_ego_arrival, schedule_aggressive, simulate_trial, AggressiveSchedule};

/// Current configuration schema.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("cannot schedule aggressive vehicle: {0}")]
    Scheduling(String),
    #[error("trial did not terminate within {0} s")]
    Timeout(f64),
    #[error("seed count {seeds} does not match repeats {repeats}")]
    Seeds { seeds: usize, repeats: usize },
}

macro_rules! named_enum {
    ($name:ident { $($variant:ident),+ }) => {
        impl $name {
            pub const ALL: [$name; 3] = [$($name::$variant),+];

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => stringify!($variant)),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                $name::ALL
                    .into_iter()
                    .find(|v| v.name().eq_ignore_ascii_case(s))
                    .ok_or_else(|| format!("unknown {} `{}`", stringify!($name), s))
            }
        }
    };
}

/// Warning countermeasure: none, or issued one or two seconds before the
/// predicted collision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WarningLead {
    None,
    OneSecond,
    TwoSeconds,
}

named_enum!(WarningLead { None, OneSecond, TwoSeconds });

impl WarningLead {
    pub fn seconds(self) -> Option<f64> {
        match self {
            WarningLead::None => None,
            WarningLead::OneSecond => Some(1.0),
            WarningLead::TwoSeconds => Some(2.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Aggressiveness {
    Low,
    Medium,
    High,
}

named_enum!(Aggressiveness { Low, Medium, High });

impl Aggressiveness {
    /// Headway by which the aggressive vehicle beats the ego vehicle to the
    /// conflict point; `None` for the yielding level.
    pub fn target_headway(self) -> Option<f64> {
        match self {
            Aggressiveness::Low => None,
            Aggressiveness::Medium => Some(1.5),
            Aggressiveness::High => Some(0.5),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StopGo {
    Stop,
    Go,
}

impl fmt::Display for StopGo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopGo::Stop => "Stop",
            StopGo::Go => "Go",
        })
    }
}

impl FromStr for StopGo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "stop" | "0" => Ok(StopGo::Stop),
            "go" | "1" => Ok(StopGo::Go),
            _ => Err(format!("unknown label `{s}`")),
        }
    }
}

/// How the ego driver responds once alerted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Decision {
    Stop,
    Go,
    /// Go when the signed headway at reaction is at least `headway` seconds
    /// (positive means the ego vehicle would arrive first), otherwise stop.
    Threshold { headway: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriverModel {
    /// Delay from the first cue (warning or visual detection) to action (s).
    pub reaction_time: f64,
    pub decision: Decision,
    /// Mildest braking peak the driver applies to a predicted conflict (m/s², < 0).
    pub comfortable_decel: f64,
    /// Hardest braking available to the driver (m/s², < 0).
    pub emergency_decel: f64,
    pub go_accel: f64,
    pub approach_speed_limit: f64,
    pub circulating_speed_limit: f64,
    /// Proportional gain of the speed tracking controller (1/s).
    pub speed_gain: f64,
    pub tracking_accel_max: f64,
    pub tracking_decel_max: f64,
    /// Deceleration used to shed speed ahead of the roundabout entry (m/s²).
    pub anticipation_decel: f64,
    /// Without a warning the driver notices the threat once the predicted
    /// time to contact falls to this value (s).
    pub visual_ttc: f64,
    /// Duration of the linear ramp into a braking command (s).
    pub decel_ramp: f64,
    /// Predicted time to collision at or below which the driver brakes with
    /// `emergency_decel` (s).
    pub urgency_floor: f64,
    /// Reduction of the braking peak per second of extra time to collision (m/s³).
    pub urgency_slope: f64,
    /// Length of a braking maneuver per second of predicted time to collision
    /// at reaction (ramp included).
    pub braking_spread: f64,
    /// Shortest braking maneuver (s).
    pub min_braking: f64,
    /// Time constant of the exponential release after the braking peak (s).
    pub peak_decay: f64,
    /// Speed cap of a go decision, as a multiple of the circulating limit.
    pub go_speed_factor: f64,
}

impl Default for DriverModel {
    fn default() -> Self {
        Self {
            reaction_time: 0.3,
            decision: Decision::Stop,
            comfortable_decel: -3.0,
            emergency_decel: -10.5,
            go_accel: 2.0,
            approach_speed_limit: 20.12,
            circulating_speed_limit: 6.71,
            speed_gain: 0.5,
            tracking_accel_max: 2.0,
            tracking_decel_max: -3.0,
            anticipation_decel: 2.0,
            visual_ttc: 0.7,
            decel_ramp: 0.3,
            urgency_floor: 0.2,
            urgency_slope: 2.0,
            braking_spread: 2.3,
            min_braking: 0.6,
            peak_decay: 0.4,
            go_speed_factor: 1.2,
        }
    }
}

impl DriverModel {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let err = |m: &str| Err(ScenarioError::Config(format!("driver.{m}")));
        if !(self.reaction_time >= 0.0) {
            return err("reaction_time must be >= 0");
        }
        if !(self.emergency_decel <= self.comfortable_decel && self.comfortable_decel < 0.0) {
            return err("need emergency_decel <= comfortable_decel < 0");
        }
        if !(self.go_accel > 0.0 && self.tracking_accel_max > 0.0 && self.tracking_decel_max < 0.0) {
            return err("accelerations have the wrong sign");
        }
        if !(self.circulating_speed_limit > 0.0 && self.approach_speed_limit >= self.circulating_speed_limit) {
            return err("need approach_speed_limit >= circulating_speed_limit > 0");
        }
        if !(self.speed_gain > 0.0 && self.anticipation_decel > 0.0 && self.decel_ramp > 0.0) {
            return err("speed_gain, anticipation_decel and decel_ramp must be > 0");
        }
        if !(self.visual_ttc >= 0.0 && self.urgency_floor >= 0.0 && self.urgency_slope >= 0.0) {
            return err("visual_ttc, urgency_floor and urgency_slope must be >= 0");
        }
        if !(self.braking_spread > 0.0 && self.min_braking > self.decel_ramp && self.peak_decay > 0.0) {
            return err("need braking_spread > 0, peak_decay > 0 and min_braking > decel_ramp");
        }
        if !(self.go_speed_factor >= 1.0) {
            return err("go_speed_factor must be >= 1");
        }
        Ok(())
    }
}

/// Speed profile of the aggressive vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggressiveModel {
    pub cruise_speed: f64,
    /// Speed held from the yield line until `merge_hold` past the merge point
    /// when not yielding.
    pub entry_speed: f64,
    pub merge_hold: f64,
    pub decel: f64,
    pub accel: f64,
    /// Speed the vehicle accelerates to after merging.
    pub circulating_speed: f64,
    /// A yielding vehicle comes to rest this long before the ego vehicle's
    /// nominal arrival at the conflict point (s).
    pub yield_stop_lead: f64,
    /// A yielding vehicle leaves once the ego vehicle is this far past the
    /// conflict point (m).
    pub clearance: f64,
}

impl Default for AggressiveModel {
    fn default() -> Self {
        Self {
            cruise_speed: 8.94,
            entry_speed: 4.5,
            merge_hold: 15.0,
            decel: 2.0,
            accel: 1.5,
            circulating_speed: 8.05,
            yield_stop_lead: 6.0,
            clearance: 10.0,
        }
    }
}

impl AggressiveModel {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.cruise_speed > 0.0
            && self.entry_speed > 0.0
            && self.entry_speed <= self.cruise_speed
            && self.merge_hold >= 0.0
            && self.decel > 0.0
            && self.accel > 0.0
            && self.circulating_speed > 0.0
            && self.yield_stop_lead >= 0.0
            && self.clearance >= 0.0)
        {
            return Err(ScenarioError::Config("aggressive: speeds and rates must be positive, entry_speed <= cruise_speed".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub aggressiveness: Aggressiveness,
    pub warning_lead: WarningLead,
    pub driver: DriverModel,
    pub aggressive: AggressiveModel,
    pub geometry: GeometryConfig,
    pub ego_vehicle: VehicleSpec<f64>,
    pub aggressive_vehicle: VehicleSpec<f64>,
    pub dt: f64,
    pub seed: u64,
    /// Delay between warning issue and its arrival in the ego vehicle (s).
    pub warning_latency: f64,
    /// Relative standard deviation of per-driver parameter jitter.
    pub jitter: f64,
    pub max_duration: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            aggressiveness: Aggressiveness::High,
            warning_lead: WarningLead::None,
            driver: DriverModel::default(),
            aggressive: AggressiveModel::default(),
            geometry: GeometryConfig::default(),
            ego_vehicle: VehicleSpec::default(),
            aggressive_vehicle: VehicleSpec::default(),
            dt: 0.1,
            seed: 0,
            warning_latency: 0.0,
            jitter: 0.1,
            max_duration: 60.0,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.dt > 0.0 && self.dt <= 1.0) {
            return Err(ScenarioError::Config("dt must be in (0, 1]".into()));
        }
        if !(self.warning_latency >= 0.0 && self.jitter >= 0.0 && self.max_duration > 0.0) {
            return Err(ScenarioError::Config("warning_latency, jitter must be >= 0 and max_duration > 0".into()));
        }
        self.driver.validate()?;
        self.aggressive.validate()?;
        for spec in [&self.ego_vehicle, &self.aggressive_vehicle] {
            spec.validate().map_err(|e| ScenarioError::Config(e.to_string()))?;
        }
        PathGeometry::roundabout(&self.geometry).map_err(|e| ScenarioError::Config(format!("geometry: {e}")))?;
        Ok(())
    }

    pub fn path_geometry(&self) -> Result<PathGeometry, ScenarioError> {
        PathGeometry::roundabout(&self.geometry).map_err(|e| ScenarioError::Config(format!("geometry: {e}")))
    }
}

/// Which cue triggered the driver's response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cue {
    Warning,
    Visual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reaction {
    pub t: f64,
    pub cue: Cue,
    pub decision: StopGo,
    /// Braking peak magnitude chosen at reaction (m/s²); zero for go.
    pub peak_decel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    /// Effective configuration, including jittered driver parameters.
    pub config: ScenarioConfig,
    pub repeat: usize,
    pub ego: Trajectory<f64>,
    pub aggressive: Trajectory<f64>,
    /// Arclength of each sample along its path.
    pub ego_s: Vec<f64>,
    pub aggressive_s: Vec<f64>,
    pub warning: Option<WarningEvent>,
    pub reaction: Option<Reaction>,
    pub collision: bool,
    pub roundabout_entry_time: Option<f64>,
    pub ego_conflict_time: Option<f64>,
    /// Unreactive headway at the aggressive vehicle's entry.
    pub scheduled_headway: Option<f64>,
}

impl TrialResult {
    pub fn outcome(&self) -> Option<StopGo> {
        self.reaction.map(|r| r.decision)
    }

    pub fn trial_id(&self) -> String {
        format!("{}_{}_r{:02}", self.config.aggressiveness, self.config.warning_lead, self.repeat)
    }

    pub fn conflict_geometry(&self) -> Result<ConflictGeometry<f64>, ScenarioError> {
        let g = self.config.path_geometry()?;
        Ok(ConflictGeometry {
            conflict_point: g.conflict_point(),
            dist_to_conflict_i: self.ego_s.iter().map(|s| g.conflict_s_ego - s).collect(),
            dist_to_conflict_j: self.aggressive_s.iter().map(|s| g.conflict_s_agg - s).collect(),
        })
    }

    pub fn safety_report(&self) -> Result<SafetyReport<f64>, SsmError> {
        let geometry = self.conflict_geometry().map_err(|_| SsmError::InvalidSpec("geometry"))?;
        let t_e = self.roundabout_entry_time.unwrap_or(0.0);
        safety_report(&self.ego, &self.aggressive, &self.config.ego_vehicle, &self.config.aggressive_vehicle, &geometry, t_e)
    }
}

/// `n` seeds derived from one master seed (SplitMix64 sequence).
pub fn derive_seeds(master: u64, n: usize) -> Vec<u64> {
    let mut state = master;
    (0..n)
        .map(|_| {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^ (z >> 31)
        })
        .collect()
}

/// Per-driver variation: reaction time and braking capability scaled by
/// independent factors `1 + jitter · z`, clamped to `[0.5, 1.5]`.
pub fn jitter_driver(driver: &DriverModel, jitter: f64, seed: u64) -> DriverModel {
    if jitter == 0.0 {
        return *driver;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut factor = || {
        let z: f64 = StandardNormal.sample(&mut rng);
        (1.0 + jitter * z).clamp(0.5, 1.5)
    };
    let fr = factor();
    let fd = factor();
    DriverModel {
        reaction_time: driver.reaction_time * fr,
        comfortable_decel: driver.comfortable_decel * fd,
        emergency_decel: driver.emergency_decel * fd,
        ..*driver
    }
}

/// All 3 × 3 cells × `repeats`, ordered by (aggressiveness, warning, repeat).
/// Repeat `r` is one simulated driver: its jittered parameters come from
/// `seeds[r]` and are shared by all nine cells.
pub fn run_design(base: &ScenarioConfig, repeats: usize, seeds: &[u64]) -> Result<Vec<TrialResult>, ScenarioError> {
    if repeats == 0 {
        return Err(ScenarioError::Config("repeats must be >= 1".into()));
    }
    if seeds.len() != repeats {
        return Err(ScenarioError::Seeds { seeds: seeds.len(), repeats });
    }
    base.validate()?;
    let cells: Vec<(Aggressiveness, WarningLead, usize)> = Aggressiveness::ALL
        .into_iter()
        .flat_map(|a| WarningLead::ALL.into_iter().flat_map(move |w| (0..repeats).map(move |r| (a, w, r))))
        .collect();
    cells
        .into_par_iter()
        .map(|(aggressiveness, warning_lead, repeat)| {
            let cfg = ScenarioConfig {
                aggressiveness,
                warning_lead,
                seed: seeds[repeat],
                driver: jitter_driver(&base.driver, base.jitter, seeds[repeat]),
                ..base.clone()
            };
            let mut result = simulate_trial(&cfg)?;
            result.repeat = repeat;
            Ok(result)
        })
        .collect()
}
