//! Scalar abstraction for the numeric code (statistics, OU process, policy
//! network). Everything numeric is written against [`Real`] so it can run in
//! `f32` or `f64`; the simulator and learner are instantiated at `f64`.

use num_traits::{Float, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

/// Real scalar type.
///
/// Transcendental functions used on simulation paths go through `libm` so a
/// run produces the same bits on every host, independent of the platform
/// math library.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal, rounding if the target is narrower.
    fn lit(x: f64) -> Self;
    fn as_f64(self) -> f64;
    fn libm_exp(self) -> Self;
    fn libm_ln(self) -> Self;
    fn libm_ln_1p(self) -> Self;
    fn libm_tanh(self) -> Self;
    fn libm_cos(self) -> Self;
}

impl Real for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    #[inline]
    fn libm_exp(self) -> Self {
        libm::exp(self)
    }
    #[inline]
    fn libm_ln(self) -> Self {
        libm::log(self)
    }
    #[inline]
    fn libm_ln_1p(self) -> Self {
        libm::log1p(self)
    }
    #[inline]
    fn libm_tanh(self) -> Self {
        libm::tanh(self)
    }
    #[inline]
    fn libm_cos(self) -> Self {
        libm::cos(self)
    }
}

impl Real for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn libm_exp(self) -> Self {
        libm::expf(self)
    }
    #[inline]
    fn libm_ln(self) -> Self {
        libm::logf(self)
    }
    #[inline]
    fn libm_ln_1p(self) -> Self {
        libm::log1pf(self)
    }
    #[inline]
    fn libm_tanh(self) -> Self {
        libm::tanhf(self)
    }
    #[inline]
    fn libm_cos(self) -> Self {
        libm::cosf(self)
    }
}

/// Rounds half to even, returning an integer. Used wherever a real-valued
/// policy output is turned into shares or ticks.
pub fn round_half_even<T: Real>(x: T) -> i64 {
    let x = x.as_f64();
    let r = x.round();
    if (x - x.trunc()).abs() == 0.5 {
        let t = x.trunc();
        if (t as i64) % 2 == 0 {
            t as i64
        } else {
            r as i64
        }
    } else {
        r as i64
    }
}
