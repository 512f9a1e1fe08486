//! Scalar abstractions shared by the numerical kernels.
//!
//! The solvers are written against [`Real`] (f32 or f64) and, for the
//! factorization routines, against [`Entry`], which covers both real scalars
//! and complex numbers built on them.

use num_complex::Complex;
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

/// Real floating-point scalar: f32 or f64.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + LowerExp + Default + Send + Sync + Entry<Real = Self> + 'static
{
    /// Lossy conversion from an f64 literal.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("representable literal")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Element type a dense LU factorization can operate on.
pub trait Entry: Copy + NumAssign + Debug + Send + Sync + 'static {
    type Real: Real;

    /// Magnitude used for pivot selection.
    fn modulus(&self) -> Self::Real;

    fn from_real(r: Self::Real) -> Self;
}

impl Entry for f32 {
    type Real = f32;
    fn modulus(&self) -> f32 {
        self.abs()
    }
    fn from_real(r: f32) -> Self {
        r
    }
}

impl Entry for f64 {
    type Real = f64;
    fn modulus(&self) -> f64 {
        self.abs()
    }
    fn from_real(r: f64) -> Self {
        r
    }
}

impl<T: Real> Entry for Complex<T> {
    type Real = T;
    fn modulus(&self) -> T {
        self.norm()
    }
    fn from_real(r: T) -> Self {
        Complex::new(r, T::zero())
    }
}

/// Converts a complex f64 value into the working precision.
pub fn cast_complex<T: Real>(z: Complex<f64>) -> Complex<T> {
    Complex::new(T::lit(z.re), T::lit(z.im))
}
