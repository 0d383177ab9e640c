//! Floating-point scalar abstraction: all geometry, rendering, and inference
//! math is generic over [`Scalar`], instantiated as `f32` or `f64`.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use rand::distr::uniform::SampleUniform;
use rand::Rng;
use rand_distr::{Beta, Distribution, Normal, StandardNormal};

/// Scalar type for the numeric core: `f32` or `f64`.
///
/// Random draws are routed through the trait so downstream generic code does
/// not need to repeat `rand_distr` bounds.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + SampleUniform + Default + Send + Sync + 'static
{
    /// One draw from the standard normal distribution.
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One draw from `Beta(alpha, beta)` on (0, 1).
    fn sample_beta<R: Rng + ?Sized>(rng: &mut R, alpha: f64, beta: f64) -> Self;

    /// One draw from `Normal(mean, std)`.
    fn sample_normal<R: Rng + ?Sized>(rng: &mut R, mean: Self, std: Self) -> Self;
}

impl Scalar for f32 {
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }

    fn sample_beta<R: Rng + ?Sized>(rng: &mut R, alpha: f64, beta: f64) -> Self {
        Beta::new(alpha as f32, beta as f32)
            .expect("beta shape parameters must be positive")
            .sample(rng)
    }

    fn sample_normal<R: Rng + ?Sized>(rng: &mut R, mean: Self, std: Self) -> Self {
        Normal::new(mean, std)
            .expect("normal std must be positive and finite")
            .sample(rng)
    }
}

impl Scalar for f64 {
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }

    fn sample_beta<R: Rng + ?Sized>(rng: &mut R, alpha: f64, beta: f64) -> Self {
        Beta::new(alpha, beta)
            .expect("beta shape parameters must be positive")
            .sample(rng)
    }

    fn sample_normal<R: Rng + ?Sized>(rng: &mut R, mean: Self, std: Self) -> Self {
        Normal::new(mean, std)
            .expect("normal std must be positive and finite")
            .sample(rng)
    }
}

/// Convert an `f64` constant or config value into the scalar type.
#[inline]
pub fn cast<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("f64 value representable in scalar type")
}

/// Convert a scalar back to `f64` (exact for f64, widening for f32).
#[inline]
pub fn to_f64<T: Scalar>(v: T) -> f64 {
    v.to_f64().expect("scalar convertible to f64")
}
