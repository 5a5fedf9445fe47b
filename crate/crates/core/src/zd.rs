//! Exact arithmetic over ℤ_d for prime d, and the roots of unity ϖ^e.
//!
//! Phases are kept as exponents of ϖ = e^{2πi/d} and only turned into
//! floating-point numbers by [`PrimeDim::omega`] at the simulator boundary.
//! A "½" always means multiplication by 2⁻¹ mod d, which needs odd d.

use std::f64::consts::TAU;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A prime qudit dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct PrimeDim {
    d: u32,
}

impl PrimeDim {
    pub fn new(d: u32) -> Result<Self> {
        if is_prime(d) {
            Ok(PrimeDim { d })
        } else {
            Err(Error::NotPrime(d))
        }
    }

    #[inline]
    pub fn get(self) -> u32 {
        self.d
    }

    #[inline]
    pub fn as_usize(self) -> usize {
        self.d as usize
    }

    /// True when 2⁻¹ exists, i.e. d > 2.
    #[inline]
    pub fn is_odd(self) -> bool {
        self.d > 2
    }

    pub fn require_odd(self, what: &'static str) -> Result<()> {
        if self.is_odd() {
            Ok(())
        } else {
            Err(Error::NeedsOdd { what, d: self.d })
        }
    }

    /// Canonical representative of `x` in [0, d).
    #[inline]
    pub fn reduce(self, x: i64) -> u32 {
        x.rem_euclid(self.d as i64) as u32
    }

    #[inline]
    pub fn add(self, a: u32, b: u32) -> u32 {
        ((a as u64 + b as u64) % self.d as u64) as u32
    }

    #[inline]
    pub fn sub(self, a: u32, b: u32) -> u32 {
        self.reduce(a as i64 - b as i64)
    }

    #[inline]
    pub fn mul(self, a: u32, b: u32) -> u32 {
        ((a as u64 * b as u64) % self.d as u64) as u32
    }

    #[inline]
    pub fn neg(self, a: u32) -> u32 {
        self.reduce(-(a as i64))
    }

    pub fn pow(self, a: u32, mut e: u64) -> u32 {
        let mut base = a % self.d;
        let mut acc = 1 % self.d;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    /// a⁻¹ mod d.
    pub fn inv(self, a: u32) -> Result<u32> {
        let a = a % self.d;
        if a == 0 {
            return Err(Error::NoInverse(self.d));
        }
        Ok(self.pow(a, self.d as u64 - 2))
    }

    /// k·2⁻¹ mod d.
    pub fn half(self, k: u32) -> Result<u32> {
        if !self.is_odd() {
            return Err(Error::HalfUndefined);
        }
        Ok(self.mul(k, (self.d + 1) / 2))
    }

    /// ϖ^e.
    #[inline]
    pub fn omega(self, e: i64) -> Complex64 {
        let r = self.reduce(e);
        Complex64::from_polar(1.0, TAU * r as f64 / self.d as f64)
    }

    pub fn elem(self, x: i64) -> ZdElem {
        ZdElem { value: self.reduce(x), dim: self }
    }
}

impl TryFrom<u32> for PrimeDim {
    type Error = Error;
    fn try_from(d: u32) -> Result<Self> {
        PrimeDim::new(d)
    }
}

impl From<PrimeDim> for u32 {
    fn from(p: PrimeDim) -> u32 {
        p.d
    }
}

impl fmt::Display for PrimeDim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.d)
    }
}

/// Trial division; dimensions here are at most a few hundred.
pub fn is_prime(d: u32) -> bool {
    if d < 2 {
        return false;
    }
    let mut i = 2u32;
    while i.saturating_mul(i) <= d {
        if d % i == 0 {
            return false;
        }
        i += 1;
    }
    true
}

/// An element of ℤ_d tagged with its modulus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ZdElem {
    value: u32,
    dim: PrimeDim,
}

impl ZdElem {
    pub fn new(value: i64, dim: PrimeDim) -> Self {
        dim.elem(value)
    }

    #[inline]
    pub fn value(self) -> u32 {
        self.value
    }

    #[inline]
    pub fn dim(self) -> PrimeDim {
        self.dim
    }

    pub fn is_zero(self) -> bool {
        self.value == 0
    }

    pub fn pow(self, e: u64) -> Self {
        ZdElem { value: self.dim.pow(self.value, e), dim: self.dim }
    }

    pub fn inverse(self) -> Result<Self> {
        Ok(ZdElem { value: self.dim.inv(self.value)?, dim: self.dim })
    }

    pub fn half(self) -> Result<Self> {
        Ok(ZdElem { value: self.dim.half(self.value)?, dim: self.dim })
    }
}

impl fmt::Display for ZdElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod {})", self.value, self.dim.d)
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident) => {
        impl $tr for ZdElem {
            type Output = ZdElem;
            fn $m(self, rhs: ZdElem) -> ZdElem {
                assert_eq!(self.dim, rhs.dim, "mixed moduli");
                ZdElem { value: self.dim.$m(self.value, rhs.value), dim: self.dim }
            }
        }
    };
}

binop!(Add, add);
binop!(Sub, sub);
binop!(Mul, mul);

impl Neg for ZdElem {
    type Output = ZdElem;
    fn neg(self) -> ZdElem {
        ZdElem { value: self.dim.neg(self.value), dim: self.dim }
    }
}

/// The phase ϖ^exponent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PhaseExp(pub ZdElem);

impl PhaseExp {
    pub fn compose(self, other: PhaseExp) -> PhaseExp {
        PhaseExp(self.0 + other.0)
    }

    pub fn to_complex(self) -> Complex64 {
        self.0.dim().omega(self.0.value() as i64)
    }
}

pub fn mod_inverse(a: ZdElem) -> Result<ZdElem> {
    a.inverse()
}

pub fn half_times(k: ZdElem) -> Result<ZdElem> {
    k.half()
}

pub fn omega_complex(e: PhaseExp) -> Complex64 {
    e.to_complex()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(d: u32) -> PrimeDim {
        PrimeDim::new(d).unwrap()
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(mod_inverse(p(5).elem(1)).unwrap().value(), 1);
        assert_eq!(mod_inverse(p(5).elem(2)).unwrap().value(), 3);
        assert_eq!(mod_inverse(p(7).elem(4)).unwrap().value(), 2);
        assert_eq!(mod_inverse(p(7).elem(0)), Err(Error::NoInverse(7)));
    }

    #[test]
    fn half_examples() {
        assert_eq!(half_times(p(3).elem(0)).unwrap().value(), 0);
        assert_eq!(half_times(p(3).elem(1)).unwrap().value(), 2);
        assert_eq!(half_times(p(5).elem(3)).unwrap().value(), 4);
        assert_eq!(half_times(p(2).elem(1)), Err(Error::HalfUndefined));
    }

    #[test]
    fn omega_examples() {
        let one = omega_complex(PhaseExp(p(3).elem(0)));
        assert!((one - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        let m1 = omega_complex(PhaseExp(p(2).elem(1)));
        assert!((m1 - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
        assert_eq!(PrimeDim::new(4), Err(Error::NotPrime(4)));
        assert_eq!(PrimeDim::new(1), Err(Error::NotPrime(1)));
    }

    #[test]
    fn primes_up_to_30() {
        let ps: Vec<u32> = (0..30).filter(|&d| is_prime(d)).collect();
        assert_eq!(ps, vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29]);
    }

    #[test]
    fn serde_rejects_composite() {
        assert!(serde_json::from_str::<PrimeDim>("9").is_err());
        assert_eq!(serde_json::from_str::<PrimeDim>("7").unwrap().get(), 7);
    }

    fn prime() -> impl Strategy<Value = u32> {
        prop::sample::select(vec![2u32, 3, 5, 7, 11, 13, 101, 251])
    }

    proptest! {
        #[test]
        fn inverse_is_inverse(d in prime(), a in 1u32..1000) {
            let dim = p(d);
            prop_assume!(a % d != 0);
            let b = dim.inv(a).unwrap();
            prop_assert_eq!(dim.mul(a, b), 1);
        }

        #[test]
        fn half_doubles_back(d in prime(), k in 0u32..1000) {
            let dim = p(d);
            prop_assume!(dim.is_odd());
            prop_assert_eq!(dim.mul(2, dim.half(k).unwrap()), k % d);
        }

        #[test]
        fn omega_is_a_homomorphism(d in prime(), a in -500i64..500, b in -500i64..500) {
            let dim = p(d);
            let lhs = dim.omega(a) * dim.omega(b);
            prop_assert!((lhs - dim.omega(a + b)).norm() < 1e-12);
            prop_assert!((dim.omega(a).norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn elem_ops_stay_in_range(d in prime(), a in -500i64..500, b in -500i64..500) {
            let dim = p(d);
            let (x, y) = (dim.elem(a), dim.elem(b));
            for z in [x + y, x - y, x * y, -x, x.pow(7)] {
                prop_assert!(z.value() < d);
            }
            prop_assert_eq!((x + y).value() as i64, (a + b).rem_euclid(d as i64));
        }
    }
}
