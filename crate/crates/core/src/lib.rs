//! Headless roundabout merging-conflict simulator with infrastructure warnings,
//! surrogate safety metrics, eye-movement features, stop-or-go intent models and
//! repeated-measures statistics.
//!
//! The numeric kernels ([`trajectory`], [`ssm`], [`gaze`], [`stats`]) are generic over
//! [`Scalar`]; the scenario engine and the classifiers run on `f64` and use the
//! aliases exported at the crate root.

pub mod gaze;
pub mod intent;
pub mod scalar;
pub mod scenario;
pub mod ssm;
pub mod stats;
pub mod trajectory;
pub mod warning;

pub use scalar::Scalar;

/// Trajectory sample in `f64`.
pub type TrajectoryPoint = trajectory::TrajectoryPoint<f64>;
/// Trajectory in `f64`.
pub type Trajectory = trajectory::Trajectory<f64>;
pub type KalmanConfig = trajectory::KalmanConfig<f64>;
pub type VehicleSpec = ssm::VehicleSpec<f64>;
pub type ConflictGeometry = ssm::ConflictGeometry<f64>;
pub type SafetyReport = ssm::SafetyReport<f64>;
pub type FixationRecord = gaze::FixationRecord<f64>;
pub type GazeLog = gaze::GazeLog<f64>;
pub type FactorialSample = stats::FactorialSample<f64>;
pub type AnovaResult = stats::AnovaResult<f64>;

pub use intent::{ClassifierMetrics, Dataset, FeatureVector};
pub use scenario::{Aggressiveness, DriverModel, PathGeometry, ScenarioConfig, TrialResult, WarningLead};
pub use warning::WarningEvent;
