use serde::{Deserialize, Serialize};

use crate::ssm::ConflictGeometry;
use crate::trajectory::{wrap_heading, Trajectory};

/// Piecewise-linear path parameterized by arclength. Positions beyond either
/// end are extrapolated along the first or last segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<[f64; 2]>,
    cumulative: Vec<f64>,
}

impl Polyline {
    /// Consecutive duplicate vertices are dropped. Needs two distinct vertices.
    pub fn new(points: Vec<[f64; 2]>) -> Option<Self> {
        let mut clean: Vec<[f64; 2]> = Vec::with_capacity(points.len());
        for p in points {
            if clean.last().map_or(true, |q| (p[0] - q[0]).hypot(p[1] - q[1]) > 1e-12) {
                clean.push(p);
            }
        }
        if clean.len() < 2 {
            return None;
        }
        let mut cumulative = Vec::with_capacity(clean.len());
        let mut s = 0.0;
        cumulative.push(0.0);
        for w in clean.windows(2) {
            s += (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            cumulative.push(s);
        }
        Some(Self { points: clean, cumulative })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }

    fn segment(&self, s: f64) -> usize {
        let n = self.points.len() - 1;
        match self.cumulative.binary_search_by(|c| c.partial_cmp(&s).unwrap_or(std::cmp::Ordering::Less)) {
            Ok(i) => i.min(n - 1),
            Err(i) => i.saturating_sub(1).min(n - 1),
        }
    }

    /// Position and heading at arclength `s`.
    pub fn pose_at(&self, s: f64) -> ([f64; 2], f64) {
        let i = self.segment(s);
        let a = self.points[i];
        let b = self.points[i + 1];
        let len = self.cumulative[i + 1] - self.cumulative[i];
        let u = (s - self.cumulative[i]) / len;
        let p = [a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])];
        (p, wrap_heading((b[1] - a[1]).atan2(b[0] - a[0])))
    }

    pub fn point_at(&self, s: f64) -> [f64; 2] {
        self.pose_at(s).0
    }

    /// Arclength of the closest point on the path, searching every segment.
    pub fn project(&self, p: [f64; 2]) -> f64 {
        self.project_range(p, 0, self.points.len() - 1).0
    }

    fn project_range(&self, p: [f64; 2], lo: usize, hi: usize) -> (f64, usize) {
        let last = self.points.len() - 2;
        let mut best = (f64::INFINITY, 0.0, lo);
        for i in lo..hi.min(last + 1) {
            let a = self.points[i];
            let b = self.points[i + 1];
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let len2 = dx * dx + dy * dy;
            let mut u = ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2;
            if i > 0 {
                u = u.max(0.0);
            }
            if i < last {
                u = u.min(1.0);
            }
            let q = [a[0] + u * dx, a[1] + u * dy];
            let d = (p[0] - q[0]).hypot(p[1] - q[1]);
            if d < best.0 {
                best = (d, self.cumulative[i] + u * len2.sqrt(), i);
            }
        }
        (best.1, best.2)
    }

    /// Arclengths of a sequence of points that move forward along the path.
    pub fn project_sequence(&self, points: &[[f64; 2]]) -> Vec<f64> {
        let n = self.points.len() - 1;
        let window = 40;
        let mut hint = None;
        points
            .iter()
            .map(|&p| {
                let (s, i) = match hint {
                    None => self.project_range(p, 0, n),
                    Some(h) => self.project_range(p, usize::saturating_sub(h, 2), (h + window).min(n)),
                };
                hint = Some(i);
                s
            })
            .collect()
    }
}

/// Dimensions of the idealized roundabout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub circulating_radius: f64,
    /// Straight approach of the ego vehicle before it enters the circle (m).
    pub ego_approach_length: f64,
    /// Straight approach of the aggressive vehicle up to the merge point (m).
    pub aggressive_approach_length: f64,
    /// Distance of the aggressive vehicle's yield line before the merge point (m).
    pub yield_offset: f64,
    pub exit_length: f64,
    /// Maximum length of the chords approximating circular arcs (m).
    pub arc_resolution: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            circulating_radius: 20.0,
            ego_approach_length: 150.0,
            aggressive_approach_length: 150.0,
            yield_offset: 8.0,
            exit_length: 60.0,
            arc_resolution: 0.25,
        }
    }
}

/// Ego and aggressive paths with the arclengths of the shared conflict point.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGeometry {
    pub ego_path: Polyline,
    pub aggressive_path: Polyline,
    pub conflict_s_ego: f64,
    pub conflict_s_agg: f64,
    pub roundabout_entry_s_ego: f64,
    pub yield_s_agg: f64,
    /// Length of the arc both paths share after the conflict point.
    pub shared_length: f64,
}

fn arc(center: [f64; 2], radius: f64, from: f64, to: f64, resolution: f64, out: &mut Vec<[f64; 2]>) {
    let n = ((to - from).abs() * radius / resolution).ceil().max(1.0) as usize;
    for k in 1..=n {
        let th = from + (to - from) * k as f64 / n as f64;
        out.push([center[0] + radius * th.cos(), center[1] + radius * th.sin()]);
    }
}

impl PathGeometry {
    /// Counter-clockwise circle centered at the origin. The ego vehicle comes
    /// in from the west, circulates through the south and leaves east; the
    /// aggressive vehicle comes up from the south, merges into the circle at
    /// its southern point and leaves north. The two paths share the quarter
    /// arc from south to east, whose start is the conflict point.
    pub fn roundabout(cfg: &GeometryConfig) -> Result<Self, &'static str> {
        let r = cfg.circulating_radius;
        if !(r > 0.0 && cfg.ego_approach_length > 0.0 && cfg.exit_length > 0.0 && cfg.arc_resolution > 0.0) {
            return Err("geometry lengths must be positive");
        }
        if !(cfg.yield_offset > 0.0 && cfg.yield_offset < cfg.aggressive_approach_length) {
            return Err("yield_offset must lie within the aggressive approach");
        }
        use std::f64::consts::PI;

        let mut ego = vec![[-r - cfg.ego_approach_length, 0.0], [-r, 0.0]];
        arc([0.0, 0.0], r, PI, 2.0 * PI, cfg.arc_resolution, &mut ego);
        ego.push([r + cfg.exit_length, 0.0]);

        let mut agg = vec![[0.0, -r - cfg.aggressive_approach_length], [0.0, -r]];
        arc([0.0, 0.0], r, 1.5 * PI, 2.5 * PI, cfg.arc_resolution, &mut agg);
        agg.push([0.0, r + cfg.exit_length]);

        let ego_path = Polyline::new(ego).ok_or("degenerate ego path")?;
        let aggressive_path = Polyline::new(agg).ok_or("degenerate aggressive path")?;
        let conflict_s_ego = ego_path.project([0.0, -r]);
        Ok(Self {
            conflict_s_ego,
            conflict_s_agg: cfg.aggressive_approach_length,
            roundabout_entry_s_ego: cfg.ego_approach_length,
            yield_s_agg: cfg.aggressive_approach_length - cfg.yield_offset,
            shared_length: 0.5 * PI * r,
            ego_path,
            aggressive_path,
        })
    }

    pub fn conflict_point(&self) -> [f64; 2] {
        self.ego_path.point_at(self.conflict_s_ego)
    }

    /// Along-path distances to the conflict point for recorded trajectories,
    /// recovered by projecting each sample onto its path.
    pub fn conflict_geometry(&self, ego: &Trajectory<f64>, agg: &Trajectory<f64>) -> ConflictGeometry<f64> {
        let pos = |t: &Trajectory<f64>| t.points.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>();
        ConflictGeometry {
            conflict_point: self.conflict_point(),
            dist_to_conflict_i: self.ego_path.project_sequence(&pos(ego)).into_iter().map(|s| self.conflict_s_ego - s).collect(),
            dist_to_conflict_j: self
                .aggressive_path
                .project_sequence(&pos(agg))
                .into_iter()
                .map(|s| self.conflict_s_agg - s)
                .collect(),
        }
    }
}
