//! Special functions: log-gamma, regularized incomplete beta and gamma, error
//! function and the standard normal CDF.

use crate::Scalar;

const MAX_ITER: usize = 500;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

fn tiny<T: Scalar>() -> T {
    T::min_positive_value() / T::epsilon()
}

/// Natural log of the gamma function for `x > 0` (Lanczos approximation).
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    if x < T::lit(0.5) {
        // reflection
        let pi = T::PI();
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::lit(LANCZOS[0]);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc = acc + T::lit(c) / (x + T::count(i));
    }
    let t = x + T::lit(LANCZOS_G + 0.5);
    T::lit(0.5) * (T::TAU()).ln() + (x + T::lit(0.5)) * t.ln() - t + acc.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf<T: Scalar>(a: T, b: T, x: T) -> T {
    let one = T::one();
    let two = T::lit(2.0);
    let eps = T::epsilon();
    let fpmin = tiny::<T>();
    let qab = a + b;
    let qap = a + one;
    let qam = a - one;
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < fpmin {
        d = fpmin;
    }
    d = one / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = T::count(m);
        let m2 = two * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < fpmin {
            d = fpmin;
        }
        c = one + aa / c;
        if c.abs() < fpmin {
            c = fpmin;
        }
        d = one / d;
        h = h * d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < fpmin {
            d = fpmin;
        }
        c = one + aa / c;
        if c.abs() < fpmin {
            c = fpmin;
        }
        d = one / d;
        let del = d * c;
        h = h * del;
        if (del - one).abs() <= eps {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)` for `a, b > 0`, `x ∈ [0, 1]`.
pub fn inc_beta<T: Scalar>(a: T, b: T, x: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    if x >= T::one() {
        return T::one();
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (T::one() - x).ln();
    let front = ln_front.exp();
    if x < (a + T::one()) / (a + b + T::lit(2.0)) {
        front * beta_cf(a, b, x) / a
    } else {
        T::one() - front * beta_cf(b, a, T::one() - x) / b
    }
}

/// Regularized lower incomplete gamma `P(a, x)` and its complement `Q(a, x)`.
pub fn inc_gamma<T: Scalar>(a: T, x: T) -> (T, T) {
    if x <= T::zero() {
        return (T::zero(), T::one());
    }
    let one = T::one();
    let eps = T::epsilon();
    let ln_front = a * x.ln() - x - ln_gamma(a);
    if x < a + one {
        let mut ap = a;
        let mut del = one / a;
        let mut sum = del;
        for _ in 0..MAX_ITER {
            ap = ap + one;
            del = del * x / ap;
            sum = sum + del;
            if del.abs() < sum.abs() * eps {
                break;
            }
        }
        let p = sum * ln_front.exp();
        (p, one - p)
    } else {
        let fpmin = tiny::<T>();
        let mut b = x + one - a;
        let mut c = one / fpmin;
        let mut d = one / b;
        let mut h = d;
        for i in 1..=MAX_ITER {
            let i = T::count(i);
            let an = -i * (i - a);
            b = b + T::lit(2.0);
            d = an * d + b;
            if d.abs() < fpmin {
                d = fpmin;
            }
            c = b + an / c;
            if c.abs() < fpmin {
                c = fpmin;
            }
            d = one / d;
            let del = d * c;
            h = h * del;
            if (del - one).abs() <= eps {
                break;
            }
        }
        let q = ln_front.exp() * h;
        (one - q, q)
    }
}

pub fn erf<T: Scalar>(x: T) -> T {
    let (p, _) = inc_gamma(T::lit(0.5), x * x);
    if x < T::zero() {
        -p
    } else {
        p
    }
}

/// Complementary error function, accurate in the upper tail.
pub fn erfc<T: Scalar>(x: T) -> T {
    let (p, q) = inc_gamma(T::lit(0.5), x * x);
    if x < T::zero() {
        T::one() + p
    } else {
        q
    }
}

/// Standard normal CDF.
pub fn normal_cdf<T: Scalar>(z: T) -> T {
    T::lit(0.5) * erfc(-z / T::SQRT_2())
}

/// Standard normal density.
pub fn normal_pdf<T: Scalar>(z: T) -> T {
    (-(z * z) / T::lit(2.0)).exp() / (T::TAU()).sqrt()
}
