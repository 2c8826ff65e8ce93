//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar used throughout the crate (`f32` or `f64`).
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal. Panics only for values the type cannot hold at all.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Standard-normal draw. Sampled in `f64` and rounded so that `f32` and
    /// `f64` consume the random stream identically.
    #[inline]
    fn standard_normal<G: Rng + ?Sized>(rng: &mut G) -> Self {
        let z: f64 = rng.sample(StandardNormal);
        Self::lit(z)
    }

    /// Uniform draw on `[0, 1)`.
    #[inline]
    fn unit_uniform<G: Rng + ?Sized>(rng: &mut G) -> Self {
        let u: f64 = rng.gen();
        Self::lit(u)
    }

    /// Absolute tolerance for "sums to one" style checks on `n` terms.
    #[inline]
    fn sum_tolerance(n: usize) -> Self {
        let scaled = Self::epsilon() * Self::lit(4.0 * n.max(1) as f64);
        scaled.max(Self::lit(1e-12))
    }
}

impl Real for f32 {}
impl Real for f64 {}
