use std::fmt::{Debug, Display, LowerExp};

use nalgebra::RealField;
use num_complex::Complex;
use num_traits::ToPrimitive;
use rustfft::FftNum;

/// Floating-point scalar the numerical core is written against.
///
/// Math functions come from [`RealField`]; `abs` and `signum` exist on both
/// `RealField` and `num_traits::Signed`, so generic code calls
/// [`Real::mag`] and [`Real::sign`] instead.
pub trait Real:
    RealField + FftNum + ToPrimitive + Copy + Default + Debug + Display + LowerExp
{
    /// Converts a literal into this scalar type.
    fn of(x: f64) -> Self;

    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn mag(self) -> Self {
        if self < Self::zero() {
            -self
        } else {
            self
        }
    }

    fn sign(self) -> Self {
        if self < Self::zero() {
            -Self::one()
        } else if self > Self::zero() {
            Self::one()
        } else {
            Self::zero()
        }
    }

    fn eps() -> Self;
}

impl Real for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    fn eps() -> Self {
        f64::EPSILON
    }
}

impl Real for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    fn eps() -> Self {
        f32::EPSILON
    }
}

/// Complex helpers for [`Real`] scalars. `num_complex` gates its own versions
/// on `num_traits::Float`, which `Real` does not extend.
pub trait ComplexExt<T: Real>: Sized {
    fn mag(&self) -> T;
    fn sqrt_c(&self) -> Self;
    fn exp_c(&self) -> Self;
}

impl<T: Real> ComplexExt<T> for Complex<T> {
    fn mag(&self) -> T {
        self.re.hypot(self.im)
    }

    fn sqrt_c(&self) -> Self {
        let r = self.mag();
        if r == T::zero() {
            return Complex::new(T::zero(), T::zero());
        }
        let re = ((r + self.re) / T::of(2.0)).sqrt();
        let im = ((r - self.re) / T::of(2.0)).sqrt();
        Complex::new(re, if self.im < T::zero() { -im } else { im })
    }

    fn exp_c(&self) -> Self {
        polar(self.re.exp(), self.im)
    }
}

/// `r·e^{iθ}`.
pub fn polar<T: Real>(r: T, theta: T) -> Complex<T> {
    Complex::new(r * theta.cos(), r * theta.sin())
}
