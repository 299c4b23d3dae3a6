//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! Everything is written against [`Real`] so the same code runs in `f32` and
//! `f64`. The harness and the acceptance runs use `f64`; `f32` is useful for
//! quick, low-precision exploration.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating point scalar: `f32` or `f64`.
pub trait Real:
    nalgebra::RealField + Copy + FromPrimitive + ToPrimitive + Sum + Debug + Display + LowerExp
{
    /// Machine epsilon of the type.
    fn eps() -> Self;

    /// Lossy conversion of a literal.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("representable count")
    }
}

impl Real for f32 {
    #[inline]
    fn eps() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    #[inline]
    fn eps() -> Self {
        f64::EPSILON
    }
}

/// Complex amplitude over a [`Real`].
pub type C<T> = Complex<T>;

#[inline]
pub(crate) fn cz<T: Real>() -> C<T> {
    Complex::new(T::zero(), T::zero())
}

#[inline]
pub(crate) fn cr<T: Real>(re: T) -> C<T> {
    Complex::new(re, T::zero())
}

/// `|z|^2`
#[inline]
pub(crate) fn abs2<T: Real>(z: C<T>) -> T {
    z.re * z.re + z.im * z.im
}

#[inline]
pub(crate) fn modulus<T: Real>(z: C<T>) -> T {
    abs2(z).sqrt()
}

/// Sequential inner product `<a|b>` (conjugates `a`).
pub(crate) fn inner<T: Real>(a: &[C<T>], b: &[C<T>]) -> C<T> {
    debug_assert_eq!(a.len(), b.len());
    let mut re = T::zero();
    let mut im = T::zero();
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re + x.im * y.im;
        im += x.re * y.im - x.im * y.re;
    }
    Complex::new(re, im)
}

pub(crate) fn norm2<T: Real>(a: &[C<T>]) -> T {
    a.iter().fold(T::zero(), |acc, z| acc + abs2(*z)).sqrt()
}
