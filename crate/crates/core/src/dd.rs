//! Double-double (compensated pair) arithmetic.
//!
//! A `DoubleDouble` stores a value as an unevaluated sum `hi + lo` with
//! `|lo| <= ulp(hi)/2`, giving roughly 32 significant decimal digits. The
//! table builders run their Newton refinements and Legendre projections in
//! this type so that fit residuals land near 1e-16..1e-17; all runtime
//! evaluation uses plain `f64`.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Error-free sum of two doubles, assuming `|a| >= |b|`.
#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let e = b - (s - a);
    (s, e)
}

/// Error-free sum of two doubles (no magnitude assumption).
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let v = s - a;
    let e = (a - (s - v)) + (b - v);
    (s, e)
}

/// Error-free product via fused multiply-add.
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let e = a.mul_add(b, -p);
    (p, e)
}

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

impl DoubleDouble {
    pub const ZERO: Self = Self { hi: 0.0, lo: 0.0 };
    pub const ONE: Self = Self { hi: 1.0, lo: 0.0 };
    pub const PI: Self = Self {
        hi: std::f64::consts::PI,
        lo: 1.224_646_799_147_353_2e-16,
    };
    const LN_2: Self = Self {
        hi: std::f64::consts::LN_2,
        lo: 2.319_046_813_846_299_6e-17,
    };

    #[inline]
    pub fn new(hi: f64, lo: f64) -> Self {
        let (s, e) = quick_two_sum(hi, lo);
        Self { hi: s, lo: e }
    }

    #[inline]
    pub fn from_f64(v: f64) -> Self {
        Self { hi: v, lo: 0.0 }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi
    }

    #[inline]
    pub fn abs(self) -> Self {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            -self
        } else {
            self
        }
    }

    pub fn sqrt(self) -> Self {
        if self.hi == 0.0 && self.lo == 0.0 {
            return Self::ZERO;
        }
        assert!(self.hi > 0.0, "sqrt of negative double-double");
        // One dd Newton step from the double seed doubles the digit count.
        let s = Self::from_f64(self.hi.sqrt());
        (s + self / s) * Self::from_f64(0.5)
    }

    /// exp(x) by range reduction against ln 2 and a Taylor tail.
    pub fn exp(self) -> Self {
        let x = self.hi;
        if x < -745.0 {
            return Self::ZERO;
        }
        assert!(x < 709.0, "double-double exp overflow");
        let k = (x / std::f64::consts::LN_2).round();
        let r = self - Self::LN_2 * Self::from_f64(k);
        // |r| <= ln2/2; the Taylor series needs ~28 terms for 1e-34.
        let mut term = Self::ONE;
        let mut sum = Self::ONE;
        for n in 1..40 {
            term = term * r / Self::from_f64(n as f64);
            sum = sum + term;
            if term.hi.abs() < 1e-36 * sum.hi.abs() {
                break;
            }
        }
        let scale = f64::powi(2.0, k as i32);
        Self {
            hi: sum.hi * scale,
            lo: sum.lo * scale,
        }
    }

    #[inline]
    pub fn recip(self) -> Self {
        Self::ONE / self
    }

    /// cos(x) for |x| <= ~16: reduction modulo pi/2 plus Taylor tails.
    pub fn cos(self) -> Self {
        const HALF_PI: DoubleDouble = DoubleDouble {
            hi: std::f64::consts::FRAC_PI_2,
            lo: 6.123_233_995_736_766e-17,
        };
        assert!(self.hi.abs() < 16.0, "dd cos argument out of reduced range");
        let k = (self.hi / std::f64::consts::FRAC_PI_2).round();
        let r = self - HALF_PI * Self::from_f64(k);
        let (s, c) = taylor_sin_cos(r);
        match (k as i64).rem_euclid(4) {
            0 => c,
            1 => -s,
            2 => -c,
            _ => s,
        }
    }
}

/// Taylor sin and cos for |r| <= pi/4 + eps.
fn taylor_sin_cos(r: DoubleDouble) -> (DoubleDouble, DoubleDouble) {
    let r2 = r * r;
    let mut term = r;
    let mut sin = r;
    let mut n = 1.0;
    loop {
        term = -term * r2 / DoubleDouble::from_f64((n + 1.0) * (n + 2.0));
        sin = sin + term;
        n += 2.0;
        if term.hi.abs() < 1e-36 || n > 40.0 {
            break;
        }
    }
    let mut term = DoubleDouble::ONE;
    let mut cos = DoubleDouble::ONE;
    let mut n = 0.0;
    loop {
        term = -term * r2 / DoubleDouble::from_f64((n + 1.0) * (n + 2.0));
        cos = cos + term;
        n += 2.0;
        if term.hi.abs() < 1e-36 || n > 40.0 {
            break;
        }
    }
    (sin, cos)
}

impl Neg for DoubleDouble {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let (s, e) = two_sum(self.hi, rhs.hi);
        let e = e + self.lo + rhs.lo;
        let (hi, lo) = quick_two_sum(s, e);
        Self { hi, lo }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let (p, e) = two_prod(self.hi, rhs.hi);
        let e = e + self.hi * rhs.lo + self.lo * rhs.hi;
        let (hi, lo) = quick_two_sum(p, e);
        Self { hi, lo }
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let q1 = self.hi / rhs.hi;
        let r = self - rhs * Self::from_f64(q1);
        let q2 = r.hi / rhs.hi;
        let r = r - rhs * Self::from_f64(q2);
        let q3 = r.hi / rhs.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Self::new(hi, lo + q3)
    }
}

/// Scalar abstraction shared by the runtime (`f64`) and builder
/// (`DoubleDouble`) paths of the special-function and fitting kernels.
pub trait Real:
    Copy
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Relative term threshold at which series summation stops.
    const SERIES_TOL: f64;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn abs(self) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    /// Integer power by binary exponentiation.
    fn powi(self, n: i32) -> Self {
        if n < 0 {
            return Self::one() / self.powi(-n);
        }
        let mut base = self;
        let mut acc = Self::one();
        let mut k = n as u32;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            k >>= 1;
        }
        acc
    }
}

impl Real for f64 {
    const SERIES_TOL: f64 = 1e-18;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
}

impl Real for DoubleDouble {
    const SERIES_TOL: f64 = 1e-34;

    #[inline]
    fn from_f64(v: f64) -> Self {
        DoubleDouble::from_f64(v)
    }
    #[inline]
    fn to_f64(self) -> f64 {
        DoubleDouble::to_f64(self)
    }
    #[inline]
    fn abs(self) -> Self {
        DoubleDouble::abs(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        DoubleDouble::sqrt(self)
    }
    #[inline]
    fn exp(self) -> Self {
        DoubleDouble::exp(self)
    }
}

/// Neumaier-compensated running sum, generic over the scalar type.
pub struct CompensatedSum<S: Real> {
    sum: S,
    c: S,
}

impl<S: Real> CompensatedSum<S> {
    pub fn new() -> Self {
        Self {
            sum: S::zero(),
            c: S::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, term: S) {
        let t = self.sum + term;
        if self.sum.abs().to_f64() >= term.abs().to_f64() {
            self.c = self.c + ((self.sum - t) + term);
        } else {
            self.c = self.c + ((term - t) + self.sum);
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> S {
        self.sum + self.c
    }
}

impl<S: Real> Default for CompensatedSum<S> {
    fn default() -> Self {
        Self::new()
    }
}
