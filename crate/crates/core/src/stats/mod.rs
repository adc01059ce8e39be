//! Two-way repeated-measures ANOVA over the warning × aggressiveness design,
//! single-df follow-up contrasts, Welch's t-test and descriptive summaries.

pub mod special;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{Aggressiveness, WarningLead};
use crate::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("unbalanced design: subject `{subject}` has no observation for warning={warning:?}, aggressiveness={aggressiveness:?}")]
    Unbalanced { subject: String, warning: WarningLead, aggressiveness: Aggressiveness },
    #[error("need at least {needed} subjects, got {got}")]
    TooFewSubjects { needed: usize, got: usize },
    #[error("degenerate sample: {0}")]
    Degenerate(&'static str),
    #[error("non-finite observation for subject `{0}`")]
    NonFinite(String),
}

/// One observation of a metric for a subject in one design cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorialSample<T> {
    pub subject_id: String,
    pub warning_level: WarningLead,
    pub aggressiveness: Aggressiveness,
    pub value: T,
}

/// One row of an ANOVA table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectRow<T> {
    pub df: usize,
    pub df_error: usize,
    pub sum_of_squares: T,
    pub mean_square: T,
    pub error_sum_of_squares: T,
    pub error_mean_square: T,
    #[serde(rename = "F")]
    pub f: T,
    pub p: T,
    pub partial_eta_sq: T,
    /// Error variance vanished while the effect did not; `F` is infinite.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult<T> {
    pub subjects: usize,
    pub warning: EffectRow<T>,
    pub aggressiveness: EffectRow<T>,
    pub interaction: EffectRow<T>,
    pub ss_subjects: T,
    pub ss_total: T,
}

/// Subject × warning × aggressiveness cube of cell means.
struct CellCube<T> {
    // [subject][warning][aggressiveness]
    cells: Vec<[[T; 3]; 3]>,
}

fn cell_means<T: Scalar>(samples: &[FactorialSample<T>]) -> Result<CellCube<T>, StatsError> {
    let mut acc: BTreeMap<&str, [[(T, usize); 3]; 3]> = BTreeMap::new();
    for s in samples {
        if !s.value.is_finite() {
            return Err(StatsError::NonFinite(s.subject_id.clone()));
        }
        let entry = acc.entry(s.subject_id.as_str()).or_insert([[(T::zero(), 0); 3]; 3]);
        let cell = &mut entry[s.warning_level.index()][s.aggressiveness.index()];
        cell.0 = cell.0 + s.value;
        cell.1 += 1;
    }
    let mut cells = Vec::with_capacity(acc.len());
    for (subject, grid) in acc {
        let mut means = [[T::zero(); 3]; 3];
        for w in WarningLead::ALL {
            for g in Aggressiveness::ALL {
                let (sum, n) = grid[w.index()][g.index()];
                if n == 0 {
                    return Err(StatsError::Unbalanced { subject: subject.to_string(), warning: w, aggressiveness: g });
                }
                means[w.index()][g.index()] = sum / T::count(n);
            }
        }
        cells.push(means);
    }
    Ok(CellCube { cells })
}

fn effect_row<T: Scalar>(ss: T, df: usize, ss_err: T, df_err: usize, scale: T) -> EffectRow<T> {
    let ms = ss / T::count(df);
    let ms_err = ss_err / T::count(df_err);
    let negligible = |v: T| v.abs() <= scale * T::epsilon() * T::lit(64.0);
    let (ss, ss_err) = (
        if negligible(ss) { T::zero() } else { ss },
        if negligible(ss_err) { T::zero() } else { ss_err },
    );
    if ss == T::zero() {
        return EffectRow {
            df,
            df_error: df_err,
            sum_of_squares: ss,
            mean_square: T::zero(),
            error_sum_of_squares: ss_err,
            error_mean_square: ms_err.max(T::zero()),
            f: T::zero(),
            p: T::one(),
            partial_eta_sq: T::zero(),
            degenerate: false,
        };
    }
    if ss_err == T::zero() {
        return EffectRow {
            df,
            df_error: df_err,
            sum_of_squares: ss,
            mean_square: ms,
            error_sum_of_squares: ss_err,
            error_mean_square: T::zero(),
            f: T::infinity(),
            p: T::zero(),
            partial_eta_sq: T::one(),
            degenerate: true,
        };
    }
    let f = ms / ms_err;
    EffectRow {
        df,
        df_error: df_err,
        sum_of_squares: ss,
        mean_square: ms,
        error_sum_of_squares: ss_err,
        error_mean_square: ms_err,
        f,
        p: f_upper_tail(f, df, T::count(df_err)),
        partial_eta_sq: ss / (ss + ss_err),
        degenerate: false,
    }
}

/// Two-way within-subjects ANOVA on a balanced subject × 3 × 3 design.
/// Replicates within a cell are averaged first; each effect is tested against
/// its own effect × subject interaction.
pub fn rm_anova<T: Scalar>(samples: &[FactorialSample<T>]) -> Result<AnovaResult<T>, StatsError> {
    let cube = cell_means(samples)?;
    let n = cube.cells.len();
    if n < 2 {
        return Err(StatsError::TooFewSubjects { needed: 2, got: n });
    }
    let nt = T::count(n);
    let three = T::lit(3.0);
    let total_count = nt * T::lit(9.0);

    let grand = cube.cells.iter().flat_map(|c| c.iter().flatten()).copied().sum::<T>() / total_count;
    let mut w_mean = [T::zero(); 3];
    let mut g_mean = [T::zero(); 3];
    let mut wg_mean = [[T::zero(); 3]; 3];
    let mut s_mean = vec![T::zero(); n];
    let mut ws_mean = vec![[T::zero(); 3]; n];
    let mut gs_mean = vec![[T::zero(); 3]; n];
    for (s, c) in cube.cells.iter().enumerate() {
        for w in 0..3 {
            for g in 0..3 {
                let y = c[w][g];
                w_mean[w] = w_mean[w] + y;
                g_mean[g] = g_mean[g] + y;
                wg_mean[w][g] = wg_mean[w][g] + y;
                s_mean[s] = s_mean[s] + y;
                ws_mean[s][w] = ws_mean[s][w] + y;
                gs_mean[s][g] = gs_mean[s][g] + y;
            }
        }
    }
    w_mean.iter_mut().chain(g_mean.iter_mut()).for_each(|m| *m = *m / (nt * three));
    wg_mean.iter_mut().flatten().for_each(|m| *m = *m / nt);
    s_mean.iter_mut().for_each(|m| *m = *m / T::lit(9.0));
    ws_mean.iter_mut().chain(gs_mean.iter_mut()).flatten().for_each(|m| *m = *m / three);

    let sq = |v: T| v * v;
    let ss_total: T = cube.cells.iter().flat_map(|c| c.iter().flatten()).map(|&y| sq(y - grand)).sum();
    let uncentered: T = cube.cells.iter().flat_map(|c| c.iter().flatten()).map(|&y| sq(y)).sum();
    let ss_w = nt * three * w_mean.iter().map(|&m| sq(m - grand)).sum::<T>();
    let ss_g = nt * three * g_mean.iter().map(|&m| sq(m - grand)).sum::<T>();
    let ss_s = T::lit(9.0) * s_mean.iter().map(|&m| sq(m - grand)).sum::<T>();
    let ss_wg = nt * wg_mean.iter().flatten().map(|&m| sq(m - grand)).sum::<T>() - ss_w - ss_g;
    let ss_ws = three * ws_mean.iter().flatten().map(|&m| sq(m - grand)).sum::<T>() - ss_w - ss_s;
    let ss_gs = three * gs_mean.iter().flatten().map(|&m| sq(m - grand)).sum::<T>() - ss_g - ss_s;
    let ss_wgs = ss_total - ss_w - ss_g - ss_s - ss_wg - ss_ws - ss_gs;

    let scale = uncentered.max(T::min_positive_value());
    let dfe = n - 1;
    Ok(AnovaResult {
        subjects: n,
        warning: effect_row(ss_w, 2, ss_ws, 2 * dfe, scale),
        aggressiveness: effect_row(ss_g, 2, ss_gs, 2 * dfe, scale),
        interaction: effect_row(ss_wg, 4, ss_wgs, 4 * dfe, scale),
        ss_subjects: ss_s,
        ss_total,
    })
}

/// Which factor a follow-up contrast pools over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ContrastGroups {
    Warning { a: Vec<WarningLead>, b: Vec<WarningLead> },
    Aggressiveness { a: Vec<Aggressiveness>, b: Vec<Aggressiveness> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastResult<T> {
    pub mean_difference: T,
    pub df1: usize,
    pub df2: usize,
    #[serde(rename = "F")]
    pub f: T,
    pub p: T,
}

/// Single-df within-subjects contrast between two pooled groups of levels,
/// reported as `F(1, n − 1)`.
pub fn rm_contrast<T: Scalar>(
    samples: &[FactorialSample<T>],
    groups: &ContrastGroups,
) -> Result<ContrastResult<T>, StatsError> {
    let cube = cell_means(samples)?;
    let n = cube.cells.len();
    if n < 2 {
        return Err(StatsError::TooFewSubjects { needed: 2, got: n });
    }
    let pooled = |c: &[[T; 3]; 3], idx: &[usize], by_warning: bool| -> T {
        let mut sum = T::zero();
        for &i in idx {
            for j in 0..3 {
                sum = sum + if by_warning { c[i][j] } else { c[j][i] };
            }
        }
        sum / T::count(3 * idx.len())
    };
    let (ia, ib, by_warning): (Vec<usize>, Vec<usize>, bool) = match groups {
        ContrastGroups::Warning { a, b } => (a.iter().map(|l| l.index()).collect(), b.iter().map(|l| l.index()).collect(), true),
        ContrastGroups::Aggressiveness { a, b } => {
            (a.iter().map(|l| l.index()).collect(), b.iter().map(|l| l.index()).collect(), false)
        }
    };
    if ia.is_empty() || ib.is_empty() {
        return Err(StatsError::Degenerate("empty contrast group"));
    }
    let diffs: Vec<T> = cube.cells.iter().map(|c| pooled(c, &ia, by_warning) - pooled(c, &ib, by_warning)).collect();
    let s = Summary::of(&diffs).ok_or(StatsError::Degenerate("empty contrast"))?;
    let df2 = n - 1;
    if s.std == T::zero() {
        let f = if s.mean == T::zero() { T::zero() } else { T::infinity() };
        let p = if s.mean == T::zero() { T::one() } else { T::zero() };
        return Ok(ContrastResult { mean_difference: s.mean, df1: 1, df2, f, p });
    }
    let t = s.mean / (s.std / T::count(n).sqrt());
    let f = t * t;
    Ok(ContrastResult { mean_difference: s.mean, df1: 1, df2, f, p: f_upper_tail(f, 1, T::count(df2)) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult<T> {
    pub t: T,
    pub df: T,
    pub p: T,
}

/// Welch's unequal-variance t-test, two-sided. Negative `t` means the mean of
/// `a` is below the mean of `b`.
pub fn welch_t<T: Scalar>(a: &[T], b: &[T]) -> Result<WelchResult<T>, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::Degenerate("each sample needs at least 2 values"));
    }
    let sa = Summary::of(a).expect("non-empty");
    let sb = Summary::of(b).expect("non-empty");
    let va = sa.std * sa.std / T::count(a.len());
    let vb = sb.std * sb.std / T::count(b.len());
    if va <= T::zero() || vb <= T::zero() {
        return Err(StatsError::Degenerate("zero-variance sample"));
    }
    let se2 = va + vb;
    let t = (sa.mean - sb.mean) / se2.sqrt();
    let df = se2 * se2 / (va * va / T::count(a.len() - 1) + vb * vb / T::count(b.len() - 1));
    Ok(WelchResult { t, df, p: t_two_sided(t, df) })
}

/// Two-sided p-value of Student's t with `df` degrees of freedom.
pub fn t_two_sided<T: Scalar>(t: T, df: T) -> T {
    if t == T::zero() {
        return T::one();
    }
    let half = T::lit(0.5);
    special::inc_beta(df * half, half, df / (df + t * t))
}

/// Upper-tail probability of the F distribution, `P(X > f)` for `X ~ F(df1, df2)`.
pub fn f_upper_tail<T: Scalar>(f: T, df1: usize, df2: T) -> T {
    if f <= T::zero() {
        return T::one();
    }
    if f.is_infinite() {
        return T::zero();
    }
    let d1 = T::count(df1);
    let half = T::lit(0.5);
    special::inc_beta(df2 * half, d1 * half, df2 / (df2 + d1 * f))
}

/// Mean, sample standard deviation and friends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary<T> {
    pub n: usize,
    pub mean: T,
    /// Sample standard deviation (n − 1 denominator); zero for a single value.
    pub std: T,
    pub sem: T,
    pub min: T,
    pub max: T,
}

impl<T: Scalar> Summary<T> {
    pub fn of(values: &[T]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().copied().sum::<T>() / T::count(n);
        let var = if n > 1 {
            values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / T::count(n - 1)
        } else {
            T::zero()
        };
        let std = var.sqrt();
        let (min, max) = values.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Some(Self { n, mean, std, sem: std / T::count(n).sqrt(), min, max })
    }
}
