//! Scalar abstraction shared by every numerical module.
//!
//! All field and geometry types are generic over a real scalar `T: Real`;
//! complex quantities are `Complex<T>`. The incidence (topological) operators
//! are generic over any `num_traits::Num`, so integer or rational arithmetic
//! can be used where exact cancellation must be observed.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use std::fmt::{Debug, LowerExp};

pub use num_complex::Complex;

/// Real floating-point scalar usable by the solvers.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + LowerExp + Debug + Send + Sync + 'static
{
    /// Machine epsilon of the type.
    fn machine_eps() -> Self;

    /// Converts an `f64` literal. Never fails for finite input.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn usize(n: usize) -> Self {
        Self::from_usize(n).expect("representable count")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite value")
    }

    #[inline]
    fn is_finite_value(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Real for f32 {
    fn machine_eps() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn machine_eps() -> Self {
        f64::EPSILON
    }
}

/// Shorthand constructor.
#[inline]
pub fn c<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

#[inline]
pub fn czero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

/// `i`
#[inline]
pub fn ci<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::one())
}

#[inline]
pub fn cabs2<T: Real>(z: Complex<T>) -> T {
    z.re * z.re + z.im * z.im
}

#[inline]
pub fn cabs<T: Real>(z: Complex<T>) -> T {
    cabs2(z).sqrt()
}

/// `exp(i·theta)`
#[inline]
pub fn cis<T: Real>(theta: T) -> Complex<T> {
    Complex::new(theta.cos(), theta.sin())
}

#[inline]
pub fn cscale<T: Real>(z: Complex<T>, s: T) -> Complex<T> {
    Complex::new(z.re * s, z.im * s)
}

/// Euclidean norm of a complex vector.
pub fn cnorm<T: Real>(v: &[Complex<T>]) -> T {
    v.iter().fold(T::zero(), |acc, z| acc + cabs2(*z)).sqrt()
}

/// Weighted Euclidean norm `sqrt(Σ w_i |v_i|²)`.
pub fn wnorm<T: Real>(v: &[Complex<T>], w: &[T]) -> T {
    debug_assert_eq!(v.len(), w.len());
    v.iter()
        .zip(w)
        .fold(T::zero(), |acc, (z, wi)| acc + *wi * cabs2(*z))
        .sqrt()
}

/// 64-bit FNV-1a, used for provenance hashes and envelope checksums.
#[derive(Clone, Copy, Debug)]
pub struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv1a {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn write_u64(&mut self, x: u64) {
        self.write(&x.to_le_bytes());
    }

    pub fn write_f64(&mut self, x: f64) {
        self.write(&x.to_bits().to_le_bytes());
    }

    pub fn finish(&self) -> u64 {
        self.0
    }

    pub fn hash(bytes: &[u8]) -> u64 {
        let mut h = Self::new();
        h.write(bytes);
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(Fnv1a::hash(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(Fnv1a::hash(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(Fnv1a::hash(b"foobar"), 0x8594_4171_f739_67e8);
    }

    #[test]
    fn complex_helpers() {
        let z = c(3.0_f64, 4.0);
        assert_eq!(cabs(z), 5.0);
        let w = cis(std::f64::consts::FRAC_PI_2);
        assert!((w.re).abs() < 1e-15 && (w.im - 1.0).abs() < 1e-15);
        assert_eq!(wnorm(&[z, z], &[1.0, 3.0]), 10.0);
    }
}
