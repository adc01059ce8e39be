//! Truncated normal model of the maximum available deceleration rate.

use serde::{Deserialize, Serialize};

use crate::stats::special::{erfc, normal_pdf};
use crate::Scalar;

/// Normal(`mean`, `std`) restricted to `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedNormal<T> {
    pub mean: T,
    pub std: T,
    pub lower: T,
    pub upper: T,
}

impl<T: Scalar> TruncatedNormal<T> {
    pub fn new(mean: T, std: T, lower: T, upper: T) -> Option<Self> {
        (std > T::zero() && lower < upper && mean.is_finite()).then_some(Self { mean, std, lower, upper })
    }

    /// `Φ(b) − Φ(a)` for standardized bounds, evaluated on the side of the
    /// distribution where the complementary error function keeps precision.
    fn mass_between(a: T, b: T) -> T {
        let half = T::lit(0.5);
        let s = T::SQRT_2();
        if a >= T::zero() {
            half * (erfc(a / s) - erfc(b / s))
        } else if b <= T::zero() {
            half * (erfc(-b / s) - erfc(-a / s))
        } else {
            T::one() - half * (erfc(-a / s) + erfc(b / s))
        }
    }

    fn standardize(&self, x: T) -> T {
        (x - self.mean) / self.std
    }

    pub fn cdf(&self, x: T) -> T {
        if x <= self.lower {
            return T::zero();
        }
        if x >= self.upper {
            return T::one();
        }
        let a = self.standardize(self.lower);
        let b = self.standardize(self.upper);
        let z = self.standardize(x);
        let p = Self::mass_between(a, z) / Self::mass_between(a, b);
        p.max(T::zero()).min(T::one())
    }

    pub fn pdf(&self, x: T) -> T {
        if x < self.lower || x > self.upper {
            return T::zero();
        }
        let a = self.standardize(self.lower);
        let b = self.standardize(self.upper);
        normal_pdf(self.standardize(x)) / (self.std * Self::mass_between(a, b))
    }
}
