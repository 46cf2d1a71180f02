//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All math is written against [`Real`], so the same code runs in `f32` or
//! `f64`. Tolerances quoted in tests assume `f64`.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, NumAssign};
use rustfft::FftNum;

pub use rustfft::num_complex::Complex;

/// Real floating-point scalar usable by the spectral machinery.
pub trait Real:
    Float + FloatConst + FftNum + NumAssign + Sum + Default + Display + LowerExp + Debug + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as num_traits::NumCast>::from(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        <Self as num_traits::NumCast>::from(n).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("finite scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `e^{i theta}`.
#[inline]
pub fn cis<T: Real>(theta: T) -> Complex<T> {
    let (s, c) = theta.sin_cos();
    Complex::new(c, s)
}

/// `|u|^{p-1}` with the convention `0^{p-1} = 0`.
#[inline]
pub fn modulus_power<T: Real>(u: Complex<T>, p: T) -> T {
    let n2 = u.norm_sqr();
    if n2 == T::zero() {
        return T::zero();
    }
    let half = (p - T::one()) / T::lit(2.0);
    if half == half.round() && half.abs() < T::lit(16.0) {
        let k = half.to_i32().unwrap_or(0);
        n2.powi(k)
    } else {
        n2.powf(half)
    }
}
