//! Forward-mode scalar abstraction.
//!
//! Residual assembly, the vehicle rollout, and the loss pipeline are written
//! once, generic over [`Real`]. Instantiated at `f64` they give the plain
//! numeric path; instantiated at [`Dual`] they carry one tangent direction
//! through the exact same arithmetic, which is how the solver obtains exact
//! directional derivatives of its own unrolled iterations.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar usable in the generic numeric kernels.
///
/// Branch decisions (clamping, gate checks) are taken on the primal value, so
/// a `Dual` follows exactly the branch its value would take as an `f64`.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;
    /// Primal value.
    fn value(self) -> f64;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tan(self) -> Self;
    fn abs(self) -> Self;

    /// Clamp against plain bounds; outside the interval the result is the
    /// bound itself with zero tangent (projection semantics).
    fn clamp_value(self, lo: f64, hi: f64) -> Self;

    fn scale(self, k: f64) -> Self {
        self * Self::constant(k)
    }
    fn add_value(self, k: f64) -> Self {
        self + Self::constant(k)
    }
    fn powi2(self) -> Self {
        self * self
    }
    fn hypot2(self, other: Self) -> Self {
        (self * self + other * other).sqrt()
    }
}

impl Real for f64 {
    #[inline]
    fn constant(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn tan(self) -> Self {
        f64::tan(self)
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline]
    fn clamp_value(self, lo: f64, hi: f64) -> Self {
        self.clamp(lo, hi)
    }
}

/// First-order dual number: value plus one tangent component.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub t: f64,
}

impl Dual {
    pub fn new(v: f64, t: f64) -> Self {
        Dual { v, t }
    }
    pub fn constant(v: f64) -> Self {
        Dual { v, t: 0.0 }
    }
    /// Seed a tangent of 1 on this value.
    pub fn seeded(v: f64) -> Self {
        Dual { v, t: 1.0 }
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, rhs: Dual) -> Dual {
        Dual::new(self.v + rhs.v, self.t + rhs.t)
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, rhs: Dual) -> Dual {
        Dual::new(self.v - rhs.v, self.t - rhs.t)
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, rhs: Dual) -> Dual {
        Dual::new(self.v * rhs.v, self.t * rhs.v + self.v * rhs.t)
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, rhs: Dual) -> Dual {
        let inv = 1.0 / rhs.v;
        Dual::new(self.v * inv, (self.t - self.v * inv * rhs.t) * inv)
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        Dual::new(-self.v, -self.t)
    }
}

impl Real for Dual {
    #[inline]
    fn constant(v: f64) -> Self {
        Dual::constant(v)
    }
    #[inline]
    fn value(self) -> f64 {
        self.v
    }
    #[inline]
    fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        Dual::new(r, if r == 0.0 { 0.0 } else { self.t / (2.0 * r) })
    }
    #[inline]
    fn sin(self) -> Self {
        Dual::new(self.v.sin(), self.t * self.v.cos())
    }
    #[inline]
    fn cos(self) -> Self {
        Dual::new(self.v.cos(), -self.t * self.v.sin())
    }
    #[inline]
    fn tan(self) -> Self {
        let c = self.v.cos();
        Dual::new(self.v.tan(), self.t / (c * c))
    }
    #[inline]
    fn abs(self) -> Self {
        if self.v < 0.0 {
            -self
        } else {
            self
        }
    }
    #[inline]
    fn clamp_value(self, lo: f64, hi: f64) -> Self {
        if self.v < lo {
            Dual::constant(lo)
        } else if self.v > hi {
            Dual::constant(hi)
        } else {
            self
        }
    }
}

/// Wrap an angle difference into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * std::f64::consts::PI);
    if r > std::f64::consts::PI {
        r -= 2.0 * std::f64::consts::PI;
    } else if r <= -std::f64::consts::PI {
        r += 2.0 * std::f64::consts::PI;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fd(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    fn probe<S: Real>(x: S) -> S {
        (x * x + S::constant(2.0)).sqrt() * x.sin() / x.tan()
    }

    #[test]
    fn dual_arithmetic_matches_finite_differences() {
        let x = 0.7;
        let d = probe(Dual::seeded(x));
        let n = fd(probe::<f64>, x);
        assert_relative_eq!(d.v, probe::<f64>(x));
        assert_relative_eq!(d.t, n, max_relative = 1e-8);
    }

    #[test]
    fn clamp_zeroes_tangent_outside_bounds() {
        let inside = Dual::seeded(0.3).clamp_value(0.0, 1.0);
        assert_eq!(inside.t, 1.0);
        let outside = Dual::seeded(1.4).clamp_value(0.0, 1.0);
        assert_eq!(outside.v, 1.0);
        assert_eq!(outside.t, 0.0);
    }

    #[test]
    fn wrap_angle_range() {
        assert_relative_eq!(wrap_angle(3.0 * std::f64::consts::PI), std::f64::consts::PI);
        assert_relative_eq!(wrap_angle(-0.1), -0.1);
        assert!(wrap_angle(7.0) <= std::f64::consts::PI);
        assert!(wrap_angle(-7.0) > -std::f64::consts::PI);
    }
}
