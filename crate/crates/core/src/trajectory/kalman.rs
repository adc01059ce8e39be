//! Fixed-interval smoother for a planar constant-velocity model.
//!
//! With a diagonal measurement covariance the two axes decouple, so each axis
//! runs its own `[position, velocity]` filter followed by a Rauch–Tung–Striebel
//! backward pass.

use serde::{Deserialize, Serialize};

use super::{wrap_heading, Trajectory, TrajectoryError, TrajectoryPoint};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanConfig<T> {
    /// White-noise acceleration std (m/s²).
    pub process_noise_std: T,
    pub measurement_noise_std_pos: T,
    pub measurement_noise_std_vel: T,
    /// Initial covariance as a multiple of the measurement covariance.
    pub initial_covariance_scale: T,
}

impl<T: Scalar> Default for KalmanConfig<T> {
    fn default() -> Self {
        Self {
            process_noise_std: T::lit(1.0),
            measurement_noise_std_pos: T::lit(0.5),
            measurement_noise_std_vel: T::lit(0.3),
            initial_covariance_scale: T::lit(10.0),
        }
    }
}

impl<T: Scalar> KalmanConfig<T> {
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        let fields = [
            (self.process_noise_std, "process_noise_std must be > 0"),
            (self.measurement_noise_std_pos, "measurement_noise_std_pos must be > 0"),
            (self.measurement_noise_std_vel, "measurement_noise_std_vel must be > 0"),
            (self.initial_covariance_scale, "initial_covariance_scale must be > 0"),
        ];
        for (value, msg) in fields {
            if !(value > T::zero() && value.is_finite()) {
                return Err(TrajectoryError::InvalidConfig(msg));
            }
        }
        Ok(())
    }
}

/// Symmetric 2×2 matrix `[[a, b], [b, d]]`.
#[derive(Debug, Clone, Copy)]
struct Sym2<T> {
    a: T,
    b: T,
    d: T,
}

#[derive(Debug, Clone, Copy)]
struct Mat2<T> {
    m: [[T; 2]; 2],
}

impl<T: Scalar> Mat2<T> {
    fn mul_vec(&self, v: [T; 2]) -> [T; 2] {
        [self.m[0][0] * v[0] + self.m[0][1] * v[1], self.m[1][0] * v[0] + self.m[1][1] * v[1]]
    }

    fn mul_sym(&self, s: Sym2<T>) -> Mat2<T> {
        let m = &self.m;
        Mat2 {
            m: [
                [m[0][0] * s.a + m[0][1] * s.b, m[0][0] * s.b + m[0][1] * s.d],
                [m[1][0] * s.a + m[1][1] * s.b, m[1][0] * s.b + m[1][1] * s.d],
            ],
        }
    }

    /// `self · s · selfᵀ`, symmetric by construction.
    fn sandwich(&self, s: Sym2<T>) -> Sym2<T> {
        let ms = self.mul_sym(s);
        let m = &self.m;
        Sym2 {
            a: ms.m[0][0] * m[0][0] + ms.m[0][1] * m[0][1],
            b: ms.m[0][0] * m[1][0] + ms.m[0][1] * m[1][1],
            d: ms.m[1][0] * m[1][0] + ms.m[1][1] * m[1][1],
        }
    }
}

impl<T: Scalar> Sym2<T> {
    fn add(self, o: Sym2<T>) -> Sym2<T> {
        Sym2 { a: self.a + o.a, b: self.b + o.b, d: self.d + o.d }
    }

    fn sub(self, o: Sym2<T>) -> Sym2<T> {
        Sym2 { a: self.a - o.a, b: self.b - o.b, d: self.d - o.d }
    }

    fn inverse(self) -> Sym2<T> {
        let det = self.a * self.d - self.b * self.b;
        Sym2 { a: self.d / det, b: -self.b / det, d: self.a / det }
    }

    fn as_mat(self) -> Mat2<T> {
        Mat2 { m: [[self.a, self.b], [self.b, self.d]] }
    }
}

fn transition<T: Scalar>(dt: T) -> Mat2<T> {
    Mat2 { m: [[T::one(), dt], [T::zero(), T::one()]] }
}

fn process_noise<T: Scalar>(dt: T, q: T) -> Sym2<T> {
    let q2 = q * q;
    let dt2 = dt * dt;
    Sym2 { a: q2 * dt2 * dt2 / T::lit(4.0), b: q2 * dt2 * dt / T::lit(2.0), d: q2 * dt2 }
}

/// Smooths one axis given position and velocity measurements.
fn smooth_axis<T: Scalar>(times: &[T], pos: &[T], vel: &[T], cfg: &KalmanConfig<T>) -> Vec<[T; 2]> {
    let n = times.len();
    let r = Sym2 {
        a: cfg.measurement_noise_std_pos * cfg.measurement_noise_std_pos,
        b: T::zero(),
        d: cfg.measurement_noise_std_vel * cfg.measurement_noise_std_vel,
    };
    let mut x_filt = Vec::with_capacity(n);
    let mut p_filt = Vec::with_capacity(n);
    let mut x_pred = Vec::with_capacity(n);
    let mut p_pred = Vec::with_capacity(n);

    let p0 = Sym2 { a: r.a * cfg.initial_covariance_scale, b: T::zero(), d: r.d * cfg.initial_covariance_scale };
    let mut x = [pos[0], vel[0]];
    let mut p = p0;
    for k in 0..n {
        if k > 0 {
            let dt = times[k] - times[k - 1];
            let f = transition(dt);
            x = f.mul_vec(x);
            p = f.sandwich(p).add(process_noise(dt, cfg.process_noise_std));
        }
        x_pred.push(x);
        p_pred.push(p);
        // H = I: K = P (P + R)⁻¹
        let s_inv = p.add(r).inverse();
        let gain = p.as_mat().mul_sym(s_inv);
        let innov = [pos[k] - x[0], vel[k] - x[1]];
        let dx = gain.mul_vec(innov);
        x = [x[0] + dx[0], x[1] + dx[1]];
        // P⁺ = P − K P
        p = p.sub(gain.mul_sym(p).symmetrize());
        x_filt.push(x);
        p_filt.push(p);
    }

    let mut xs = x_filt.clone();
    let mut ps = p_filt.clone();
    for k in (0..n.saturating_sub(1)).rev() {
        let f = transition(times[k + 1] - times[k]);
        // G = P_k Fᵀ P_{k+1|k}⁻¹
        let pf = p_filt[k].as_mat();
        let pft = Mat2 {
            m: [
                [pf.m[0][0] * f.m[0][0] + pf.m[0][1] * f.m[0][1], pf.m[0][0] * f.m[1][0] + pf.m[0][1] * f.m[1][1]],
                [pf.m[1][0] * f.m[0][0] + pf.m[1][1] * f.m[0][1], pf.m[1][0] * f.m[1][0] + pf.m[1][1] * f.m[1][1]],
            ],
        };
        let g = pft.mul_sym(p_pred[k + 1].inverse());
        let dx = [xs[k + 1][0] - x_pred[k + 1][0], xs[k + 1][1] - x_pred[k + 1][1]];
        let corr = g.mul_vec(dx);
        xs[k] = [x_filt[k][0] + corr[0], x_filt[k][1] + corr[1]];
        ps[k] = p_filt[k].add(g.sandwich(ps[k + 1].sub(p_pred[k + 1])));
    }
    xs
}

impl<T: Scalar> Mat2<T> {
    fn symmetrize(self) -> Sym2<T> {
        let two = T::lit(2.0);
        Sym2 { a: self.m[0][0], b: (self.m[0][1] + self.m[1][0]) / two, d: self.m[1][1] }
    }
}

/// Smooths positions and velocities of `traj` with a forward filter and a
/// backward pass. Timestamps are preserved exactly; speed and heading come from
/// the smoothed velocity, acceleration from differencing the smoothed speed.
pub fn kalman_smooth<T: Scalar>(traj: &Trajectory<T>, cfg: &KalmanConfig<T>) -> Result<Trajectory<T>, TrajectoryError> {
    cfg.validate()?;
    let n = traj.points.len();
    if n < 2 {
        return Err(TrajectoryError::InsufficientData { needed: 2, got: n });
    }
    let times: Vec<T> = traj.points.iter().map(|p| p.t).collect();
    let (xs, ys): (Vec<T>, Vec<T>) = traj.points.iter().map(|p| (p.x, p.y)).unzip();
    let (vxs, vys): (Vec<T>, Vec<T>) = traj.points.iter().map(|p| (p.velocity()[0], p.velocity()[1])).unzip();

    let sx = smooth_axis(&times, &xs, &vxs, cfg);
    let sy = smooth_axis(&times, &ys, &vys, cfg);

    let speeds: Vec<T> = sx.iter().zip(&sy).map(|(a, b)| a[1].hypot(b[1])).collect();
    let accels = central_difference(&times, &speeds);

    let points = (0..n)
        .map(|k| {
            let heading = if speeds[k] > T::lit(1e-9) {
                wrap_heading(sy[k][1].atan2(sx[k][1]))
            } else {
                traj.points[k].heading
            };
            TrajectoryPoint { t: times[k], x: sx[k][0], y: sy[k][0], v: speeds[k], a: accels[k], heading }
        })
        .collect();
    Ok(Trajectory { vehicle_id: traj.vehicle_id.clone(), points, dt: traj.dt })
}

/// Central differences in the interior, one-sided at the ends.
pub(crate) fn central_difference<T: Scalar>(times: &[T], values: &[T]) -> Vec<T> {
    let n = values.len();
    (0..n)
        .map(|k| {
            let (lo, hi) = match k {
                0 => (0, 1.min(n - 1)),
                _ if k == n - 1 => (k - 1, k),
                _ => (k - 1, k + 1),
            };
            if hi == lo {
                T::zero()
            } else {
                (values[hi] - values[lo]) / (times[hi] - times[lo])
            }
        })
        .collect()
}
