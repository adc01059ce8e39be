//! Independent reference computations shared by the integration tests and the
//! acceptance suite. Nothing here calls into the library under test.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for k in 1..n {
        sum += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

/// Truncated-normal CDF by integrating the untruncated density.
pub fn truncated_normal_cdf(x: f64, mean: f64, std: f64, lower: f64, upper: f64) -> f64 {
    if x <= lower {
        return 0.0;
    }
    if x >= upper {
        return 1.0;
    }
    let pdf = |t: f64| (-0.5 * ((t - mean) / std).powi(2)).exp() / (std * (2.0 * PI).sqrt());
    simpson(pdf, lower, x, 20_000) / simpson(pdf, lower, upper, 20_000)
}

/// Sums of squares of a subject × 3 × 3 design by explicit mean subtraction:
/// (warning, aggressiveness, interaction, subjects, warning×subject,
/// aggressiveness×subject, three-way residual).
pub fn brute_force_ss(cells: &[[[f64; 3]; 3]]) -> [f64; 7] {
    let n = cells.len();
    let nf = n as f64;
    let grand = cells.iter().flat_map(|c| c.iter().flatten()).sum::<f64>() / (9.0 * nf);
    let m_w = |w: usize| cells.iter().map(|c| c[w].iter().sum::<f64>()).sum::<f64>() / (3.0 * nf);
    let m_g = |g: usize| cells.iter().map(|c| (0..3).map(|w| c[w][g]).sum::<f64>()).sum::<f64>() / (3.0 * nf);
    let m_wg = |w: usize, g: usize| cells.iter().map(|c| c[w][g]).sum::<f64>() / nf;
    let m_s = |s: usize| cells[s].iter().flatten().sum::<f64>() / 9.0;
    let m_sw = |s: usize, w: usize| cells[s][w].iter().sum::<f64>() / 3.0;
    let m_sg = |s: usize, g: usize| (0..3).map(|w| cells[s][w][g]).sum::<f64>() / 3.0;

    let mut ss = [0.0; 7];
    for s in 0..n {
        for w in 0..3 {
            for g in 0..3 {
                let y = cells[s][w][g];
                ss[0] += (m_w(w) - grand).powi(2);
                ss[1] += (m_g(g) - grand).powi(2);
                ss[2] += (m_wg(w, g) - m_w(w) - m_g(g) + grand).powi(2);
                ss[3] += (m_s(s) - grand).powi(2);
                ss[4] += (m_sw(s, w) - m_s(s) - m_w(w) + grand).powi(2);
                ss[5] += (m_sg(s, g) - m_s(s) - m_g(g) + grand).powi(2);
                ss[6] += (y - m_sw(s, w) - m_sg(s, g) - m_wg(w, g) + m_s(s) + m_w(w) + m_g(g) - grand).powi(2);
            }
        }
    }
    ss
}

/// Welch statistic and Satterthwaite degrees of freedom.
pub fn welch_closed_form(a: &[f64], b: &[f64]) -> (f64, f64) {
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        (n, m, v)
    };
    let (na, ma, va) = stats(a);
    let (nb, mb, vb) = stats(b);
    let (qa, qb) = (va / na, vb / nb);
    let t = (ma - mb) / (qa + qb).sqrt();
    let df = (qa + qb).powi(2) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    (t, df)
}

/// Two-sided p-value of Student's t with 4 degrees of freedom, in closed form.
pub fn t4_two_sided(t: f64) -> f64 {
    let t = t.abs();
    let cdf = 0.5 + 0.375 * t / (1.0 + t * t / 4.0).sqrt() * (1.0 - t * t / (12.0 * (1.0 + t * t / 4.0)));
    2.0 * (1.0 - cdf)
}

/// Exact position on the default-shaped roundabout (radius `r`) of the ego
/// vehicle, `u` meters past the conflict point along its path.
pub fn ego_position(u: f64, r: f64) -> [f64; 2] {
    let arc = 0.5 * PI * r;
    if u < -arc {
        [-r + (u + arc), 0.0]
    } else if u <= arc {
        let th = 1.5 * PI + u / r;
        [r * th.cos(), r * th.sin()]
    } else {
        [r + (u - arc), 0.0]
    }
}

/// Same for the aggressive vehicle, which comes up from the south.
pub fn aggressive_position(u: f64, r: f64) -> [f64; 2] {
    let arc = PI * r;
    if u < 0.0 {
        [0.0, -r + u]
    } else if u <= arc {
        let th = 1.5 * PI + u / r;
        [r * th.cos(), r * th.sin()]
    } else {
        [0.0, r + (u - arc)]
    }
}

/// Constant-speed extrapolation from distances-to-conflict `d_i`, `d_j` on a
/// 1 ms grid over `horizon`: returns the first time the centers are within
/// `contact` (if any) and the minimum center distance with its time.
pub fn dense_grid_contact(d_i: f64, v_i: f64, d_j: f64, v_j: f64, r: f64, contact: f64, horizon: f64) -> (Option<f64>, f64, f64) {
    let steps = (horizon * 1000.0).round() as usize;
    let mut first = None;
    let (mut best, mut t_best) = (f64::INFINITY, 0.0);
    for k in 0..=steps {
        let tau = k as f64 / 1000.0;
        let a = ego_position(v_i * tau - d_i, r);
        let b = aggressive_position(v_j * tau - d_j, r);
        let d = (a[0] - b[0]).hypot(a[1] - b[1]);
        if d < best {
            best = d;
            t_best = tau;
        }
        if first.is_none() && d <= contact {
            first = Some(tau);
        }
    }
    (first, best, t_best)
}

/// Kinematic sample `(t, x, y, v, heading)`.
pub type Sample = (f64, f64, f64, f64, f64);

/// Step-by-step recomputation of the minimum TTC from raw samples: returns
/// the minimum and its time.
pub fn kinematic_min_ttc(i: &[Sample], j: &[Sample], radii: f64) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for (&(t, xi, yi, vi, hi), &(tj, xj, yj, vj, hj)) in i.iter().zip(j) {
        assert_eq!(t, tj);
        let (dx, dy) = (xj - xi, yj - yi);
        let c = (dx * dx + dy * dy).sqrt();
        let net = c - radii;
        let ttc = if net <= 0.0 {
            0.0
        } else {
            let closing = (vi * (hi.cos() * dx + hi.sin() * dy) - vj * (hj.cos() * dx + hj.sin() * dy)) / c;
            if closing <= 0.0 {
                continue;
            }
            net / closing
        };
        if best.map_or(true, |(b, _)| ttc < b) {
            best = Some((ttc, t));
        }
    }
    best
}
