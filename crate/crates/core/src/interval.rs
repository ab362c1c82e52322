//! Minimal outward-rounded interval arithmetic, enough to enclose the Hill
//! inverse second derivatives over a parameter box.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[inline]
fn down(x: f64) -> f64 {
    x.next_down()
}

#[inline]
fn up(x: f64) -> f64 {
    x.next_up()
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "empty interval [{lo}, {hi}]");
        Self { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Largest absolute value in the interval.
    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn is_positive(&self) -> bool {
        self.lo > 0.0
    }

    pub fn recip(self) -> Self {
        assert!(self.lo > 0.0 || self.hi < 0.0, "reciprocal of an interval containing zero");
        Self { lo: down(1.0 / self.hi), hi: up(1.0 / self.lo) }
    }

    /// Natural log; requires `lo > 0`. Widened by two ulps for libm error.
    pub fn ln(self) -> Self {
        assert!(self.lo > 0.0, "log of a nonpositive interval");
        Self { lo: down(down(self.lo.ln())), hi: up(up(self.hi.ln())) }
    }

    pub fn exp(self) -> Self {
        Self { lo: down(down(self.lo.exp())).max(0.0), hi: up(up(self.hi.exp())) }
    }

    pub fn powi(self, n: u32) -> Self {
        let mut acc = Interval::point(1.0);
        for _ in 0..n {
            acc = acc * self;
        }
        // Even powers of a sign-straddling interval are nonnegative.
        if n.is_multiple_of(2) && acc.lo < 0.0 {
            acc.lo = 0.0;
        }
        acc
    }
}

impl Add for Interval {
    type Output = Interval;

    fn add(self, rhs: Self) -> Self {
        Self { lo: down(self.lo + rhs.lo), hi: up(self.hi + rhs.hi) }
    }
}

impl Sub for Interval {
    type Output = Interval;

    fn sub(self, rhs: Self) -> Self {
        Self { lo: down(self.lo - rhs.hi), hi: up(self.hi - rhs.lo) }
    }
}

impl Neg for Interval {
    type Output = Interval;

    fn neg(self) -> Self {
        Self { lo: -self.hi, hi: -self.lo }
    }
}

impl Mul for Interval {
    type Output = Interval;

    fn mul(self, rhs: Self) -> Self {
        let c = [self.lo * rhs.lo, self.lo * rhs.hi, self.hi * rhs.lo, self.hi * rhs.hi];
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { lo: down(lo), hi: up(hi) }
    }
}

impl Div for Interval {
    type Output = Interval;

    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Self) -> Self {
        self * rhs.recip()
    }
}

impl Add<f64> for Interval {
    type Output = Interval;

    fn add(self, rhs: f64) -> Self {
        self + Interval::point(rhs)
    }
}

impl Mul<f64> for Interval {
    type Output = Interval;

    fn mul(self, rhs: f64) -> Self {
        self * Interval::point(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iv() -> impl Strategy<Value = Interval> {
        (-10.0f64..10.0, 0.0f64..5.0).prop_map(|(a, w)| Interval::new(a, a + w))
    }

    fn pos_iv() -> impl Strategy<Value = Interval> {
        (0.01f64..10.0, 0.0f64..5.0).prop_map(|(a, w)| Interval::new(a, a + w))
    }

    fn sample(i: Interval, t: f64) -> f64 {
        i.lo + t * (i.hi - i.lo)
    }

    proptest! {
        #[test]
        fn arithmetic_encloses_point_results(a in iv(), b in iv(), p in pos_iv(), s in 0.0f64..1.0, t in 0.0f64..1.0) {
            let (x, y, z) = (sample(a, s), sample(b, t), sample(p, t));
            prop_assert!((a + b).contains(x + y));
            prop_assert!((a - b).contains(x - y));
            prop_assert!((a * b).contains(x * y));
            prop_assert!((a / p).contains(x / z));
            prop_assert!(p.ln().contains(z.ln()));
            prop_assert!(a.exp().contains(x.exp()));
            prop_assert!(a.powi(2).contains(x * x));
            prop_assert!(a.powi(3).contains(x * x * x));
        }
    }

    #[test]
    fn magnitude_and_sign() {
        let i = Interval::new(-3.0, 2.0);
        assert_eq!(i.mag(), 3.0);
        assert!(i.powi(2).lo >= 0.0);
        assert!(!i.is_positive());
        assert!(Interval::new(0.5, 1.0).is_positive());
    }
}
