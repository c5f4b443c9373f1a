//! Closed-form security bounds, generic over the scalar.
//!
//! `tmto_bound`, `cascade_w` and `st_product` use only field operations and
//! evaluate exactly over rationals; the staleness and tail bounds need
//! `exp` and take a float.

use num_traits::{Float, FromPrimitive, Num};
use serde::Serialize;

fn lit<T: FromPrimitive>(x: u64) -> T {
    T::from_u64(x).expect("small integer is representable")
}

/// Lower bound on adversary hash work, `K d (1 + (1 - alpha)(2 rho + 1))`.
pub fn tmto_bound<T: Num + Copy + FromPrimitive>(alpha: T, rho: T, d: T, steps: T) -> T {
    let two: T = lit(2);
    steps * d * (T::one() + (T::one() - alpha) * (two * rho + T::one()))
}

/// Expected recomputation cost per miss, `W = sum_{l=0}^{rho} [d(1 - alpha)]^l`.
pub fn cascade_w<T: Num + Copy>(alpha: T, rho: u32, d: T) -> T {
    let m = d * (T::one() - alpha);
    let mut term = T::one();
    let mut total = T::zero();
    for _ in 0..=rho {
        total = total + term;
        term = term * m;
    }
    total
}

/// Space-time product over `K^2`: `alpha (1 - alpha) d W / rho`.
pub fn st_product<T: Num + Copy + FromPrimitive>(alpha: T, rho: u32, d: T) -> T {
    alpha * (T::one() - alpha) * d * cascade_w(alpha, rho, d) / lit(rho as u64)
}

/// Staleness-strengthened cost `W* = sum_{l=0}^{rho} prod_{k<l} d(1 - alpha e^{-k})`.
pub fn staleness_w<T: Float>(alpha: T, rho: u32, d: T) -> T {
    let mut prod = T::one();
    let mut total = T::zero();
    for l in 0..=rho {
        total = total + prod;
        let k = T::from(l).expect("small integer");
        prod = prod * d * (T::one() - alpha * (-k).exp());
    }
    total
}

/// `st_product` with `W*` in place of `W`.
pub fn staleness_st_product<T: Float>(alpha: T, rho: u32, d: T) -> T {
    let r = T::from(rho).expect("small integer");
    alpha * (T::one() - alpha) * d * staleness_w(alpha, rho, d) / r
}

/// Union bound on some vertex deviating from its mean read count by a
/// factor `delta`: `N exp(-delta^2 d rho / 3)`.
pub fn chernoff_tail<T: Float>(n: T, d: T, rho: T, delta: T) -> T {
    let three = T::from(3).expect("small integer");
    n * (-(delta * delta) * d * rho / three).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

impl Regime {
    /// Classifies a branching factor `m` against 1.
    pub fn of<T: PartialOrd + num_traits::One>(m: &T) -> Regime {
        let one = T::one();
        if *m > one {
            Regime::Supercritical
        } else if *m < one {
            Regime::Subcritical
        } else {
            Regime::Critical
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Subcritical => "subcritical",
            Regime::Critical => "critical",
            Regime::Supercritical => "supercritical",
        }
    }
}
