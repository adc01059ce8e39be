//! Seeded synthetic benchmark with a fixed class balance, standing in for
//! human-subject feature data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureVector};
use crate::gaze::{Aoi, FixationRecord, GazeLog};
use crate::scenario::StopGo;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SyntheticVariant {
    /// Classes separated by a hyperplane in the latent space, with a margin.
    Linear,
    /// Go on an interaction region of speed, headway and DRAC.
    Nonlinear,
}

impl std::str::FromStr for SyntheticVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(SyntheticVariant::Linear),
            "nonlinear" => Ok(SyntheticVariant::Nonlinear),
            _ => Err(format!("unknown variant `{s}`, expected linear or nonlinear")),
        }
    }
}

const MARGIN: f64 = 0.3;

/// `Some(label)` when the latent point is clearly on one side, `None` inside
/// the margin.
fn classify(variant: SyntheticVariant, z: &[f64; 6]) -> Option<StopGo> {
    match variant {
        SyntheticVariant::Linear => {
            let s = 1.2 * z[0] + z[1] - 0.5 * z[3];
            if s > 1.0 + 2.0 * MARGIN {
                Some(StopGo::Go)
            } else if s < 1.0 - 2.0 * MARGIN {
                Some(StopGo::Stop)
            } else {
                None
            }
        }
        SyntheticVariant::Nonlinear => {
            let m = MARGIN / 2.0;
            if z[0].abs() < m || z[1].abs() < m || (z[3] + 0.8).abs() < m {
                return None;
            }
            let go = (z[0] > 0.0 && z[1] > 0.0) || (z[0] < 0.0 && z[1] < 0.0 && z[3] < -0.8);
            Some(if go { StopGo::Go } else { StopGo::Stop })
        }
    }
}

fn features(z: &[f64; 6], label: StopGo) -> FeatureVector {
    FeatureVector {
        v_i: (6.0 + 1.5 * z[0]).max(0.1),
        h_t: (0.4 * z[1]).exp(),
        an: 0.6 * (0.4 * z[2]).exp(),
        drac: 2.0 * (0.5 * z[3]).exp(),
        mfd_road: 0.35 * (0.25 * z[4]).exp(),
        pd_bar: (30.0 + 3.0 * z[5]).max(1.0),
        label,
    }
}

/// `n` rows of which exactly `n_go` are Go, drawn by rejection from standard
/// normal latents. Rows appear in draw order.
pub fn synthetic_dataset(variant: SyntheticVariant, n: usize, n_go: usize, seed: u64) -> Dataset {
    assert!(n_go <= n, "n_go must not exceed n");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut go, mut stop) = (0, 0);
    let mut rows = Vec::with_capacity(n);
    while rows.len() < n {
        let z: [f64; 6] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        match classify(variant, &z) {
            Some(StopGo::Go) if go < n_go => {
                go += 1;
                rows.push(features(&z, StopGo::Go));
            }
            Some(StopGo::Stop) if stop < n - n_go => {
                stop += 1;
                rows.push(features(&z, StopGo::Stop));
            }
            _ => {}
        }
    }
    Dataset { rows, split_seed: seed }
}

/// Fixation log covering `[0, duration]`: fixations of 0.15 to 0.6 s with
/// 20 to 80 ms saccades between them, AOIs drawn with road-ahead weight 0.6.
pub fn synthetic_gaze(trial_id: &str, duration: f64, seed: u64) -> GazeLog<f64> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    let mut t = 0.0;
    while t < duration {
        let len = rng.gen_range(0.15..0.6);
        let aoi = match rng.gen_range(0.0..1.0) {
            u if u < 0.6 => Aoi::RoadAhead,
            u if u < 0.8 => Aoi::AggressiveVehicle,
            u if u < 0.9 => Aoi::SpeedInfo,
            _ => Aoi::WarningInfo,
        };
        let z: f64 = StandardNormal.sample(&mut rng);
        let base = 30.0 + 2.0 * z;
        records.push(FixationRecord {
            t_start: t,
            t_end: t + len,
            aoi,
            pupil_left: base.max(5.0),
            pupil_right: (base + rng.gen_range(-0.5..0.5)).max(5.0),
        });
        t += len + rng.gen_range(0.02..0.08);
    }
    GazeLog { trial_id: trial_id.to_string(), records }
}
