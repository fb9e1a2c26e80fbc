//! Floating-point abstraction shared by every numerical routine in the crate.
//!
//! All kernels are written against [`Scalar`] so they run in either `f32` or
//! `f64`. Sampling primitives live on the trait because `rand_distr` needs a
//! concrete `Distribution<T>` impl per float width.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};

pub trait Scalar:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Infallible for the float widths we implement.
    fn lit(x: f64) -> Self;

    fn to_f64_lossy(self) -> f64;

    fn count(n: usize) -> Self {
        Self::lit(n as f64)
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Uniform on `[0, 1)`.
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;

    fn chi_squared<R: Rng + ?Sized>(dof: Self, rng: &mut R) -> Self;

    /// Gamma with the given shape and scale (mean = shape * scale).
    fn gamma<R: Rng + ?Sized>(shape: Self, scale: Self, rng: &mut R) -> Self;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn lit(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn to_f64_lossy(self) -> f64 {
                self as f64
            }

            #[inline]
            fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                <StandardNormal as Distribution<$t>>::sample(&StandardNormal, rng)
            }

            #[inline]
            fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.random::<$t>()
            }

            fn chi_squared<R: Rng + ?Sized>(dof: Self, rng: &mut R) -> Self {
                ChiSquared::new(dof)
                    .expect("chi-square degrees of freedom must be positive")
                    .sample(rng)
            }

            fn gamma<R: Rng + ?Sized>(shape: Self, scale: Self, rng: &mut R) -> Self {
                Gamma::new(shape, scale)
                    .expect("gamma shape and scale must be positive")
                    .sample(rng)
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// Standard normal CDF, evaluated in `f64`.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Numerically stable `ln(sum(exp(x)))`. Returns `-inf` for empty input or
/// when every term is `-inf`.
pub fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    let s: T = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}
