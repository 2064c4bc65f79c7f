//! Scalar abstraction and signed log-space numbers.
//!
//! Every numerical routine in the crate is generic over [`Real`], which is
//! implemented for `f32` and `f64`. Carleman weights are doubly exponential
//! in the exponent parameter, so quantities that would overflow any float
//! format are carried as [`SignedLog`] values and combined with
//! log-sum-exp.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar usable by the discretization and the estimates.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }

    /// Converts a count into this scalar type.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `ln(1 + e^x)` without overflow.
pub fn ln_one_plus_exp<S: Real>(x: S) -> S {
    if x > S::lit(30.0) {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln(1 - e^x)` for `x <= 0`; `-inf` at `x == 0`.
pub fn ln_one_minus_exp<S: Real>(x: S) -> S {
    debug_assert!(x <= S::zero());
    if x > -S::LN_2() {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// `ln(e^a + e^b)`.
pub fn log_add_exp<S: Real>(a: S, b: S) -> S {
    if a == S::neg_infinity() {
        return b;
    }
    if b == S::neg_infinity() {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + ln_one_plus_exp(lo - hi)
}

/// `ln(Σ e^{x_i})`; `-inf` for an empty iterator.
pub fn log_sum_exp<S: Real, I: IntoIterator<Item = S>>(xs: I) -> S {
    let xs: Vec<S> = xs.into_iter().collect();
    let max = xs.iter().copied().fold(S::neg_infinity(), S::max);
    if max == S::neg_infinity() || !max.is_finite() {
        return max;
    }
    let sum: S = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// A real number stored as a sign and the natural log of its magnitude.
///
/// Zero has `ln_abs == -inf` and sign `0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignedLog<S> {
    pub sign: i8,
    pub ln_abs: S,
}

// Inherent arithmetic mirrors the operator traits so callers need no imports.
#[allow(clippy::should_implement_trait)]
impl<S: Real> SignedLog<S> {
    pub fn zero() -> Self {
        Self {
            sign: 0,
            ln_abs: S::neg_infinity(),
        }
    }

    pub fn from_ln(sign: i8, ln_abs: S) -> Self {
        if sign == 0 || ln_abs == S::neg_infinity() {
            Self::zero()
        } else {
            Self {
                sign: sign.signum(),
                ln_abs,
            }
        }
    }

    pub fn from_value(x: S) -> Self {
        if x == S::zero() {
            Self::zero()
        } else {
            Self::from_ln(if x > S::zero() { 1 } else { -1 }, x.abs().ln())
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    /// Plain value; may overflow to infinity or underflow to zero.
    pub fn value(&self) -> S {
        match self.sign {
            0 => S::zero(),
            s => S::lit(f64::from(s)) * self.ln_abs.exp(),
        }
    }

    /// Value divided by `e^{log_scale}`.
    pub fn rescaled(&self, log_scale: S) -> S {
        match self.sign {
            0 => S::zero(),
            s => S::lit(f64::from(s)) * (self.ln_abs - log_scale).exp(),
        }
    }

    pub fn neg(self) -> Self {
        Self {
            sign: -self.sign,
            ln_abs: self.ln_abs,
        }
    }

    pub fn mul(self, other: Self) -> Self {
        Self::from_ln(self.sign * other.sign, self.ln_abs + other.ln_abs)
    }

    /// Multiplies by the positive number `e^{ln_factor}`.
    pub fn scale_ln(self, ln_factor: S) -> Self {
        Self::from_ln(self.sign, self.ln_abs + ln_factor)
    }

    pub fn add(self, other: Self) -> Self {
        if self.is_zero() {
            return other;
        }
        if other.is_zero() {
            return self;
        }
        if self.sign == other.sign {
            return Self::from_ln(self.sign, log_add_exp(self.ln_abs, other.ln_abs));
        }
        let (big, small) = if self.ln_abs >= other.ln_abs {
            (self, other)
        } else {
            (other, self)
        };
        let d = small.ln_abs - big.ln_abs;
        if d == S::zero() {
            return Self::zero();
        }
        Self::from_ln(big.sign, big.ln_abs + ln_one_minus_exp(d))
    }

    pub fn sub(self, other: Self) -> Self {
        self.add(other.neg())
    }
}

impl<S: Real> std::ops::Neg for SignedLog<S> {
    type Output = Self;
    fn neg(self) -> Self {
        SignedLog::neg(self)
    }
}

impl<S: Real> std::ops::Mul for SignedLog<S> {
    type Output = Self;
    fn mul(self, other: Self) -> Self {
        SignedLog::mul(self, other)
    }
}

impl<S: Real> std::ops::Add for SignedLog<S> {
    type Output = Self;
    fn add(self, other: Self) -> Self {
        SignedLog::add(self, other)
    }
}

impl<S: Real> std::ops::Sub for SignedLog<S> {
    type Output = Self;
    fn sub(self, other: Self) -> Self {
        SignedLog::sub(self, other)
    }
}
