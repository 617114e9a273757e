//! Forward-mode automatic differentiation scalars.
//!
//! The kinematic chain is written once, generic over [`Real`], and
//! evaluated with:
//!
//! * `f64` for plain positions,
//! * [`Dual<N>`] for Jacobians (one partial per generalized coordinate),
//! * [`Taylor2`] for second-order directional derivatives along a path
//!   `q(t) = q + t·q̇ + ½t²·q̈`, which gives `J q̈ + q̇ᵀ∇²p q̇` in one pass.
//!
//! The mass matrix and the Coriolis/gravity vector are assembled from these
//! at run time, so nothing about the Lagrangian is transcribed by hand.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Mul<f64, Output = Self>
    + Add<f64, Output = Self>
{
    fn cst(v: f64) -> Self;
    fn value(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;
    fn asin(self) -> Self;
    fn atan2(self, x: Self) -> Self;
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
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
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn asin(self) -> Self {
        f64::asin(self)
    }
    #[inline]
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
}

/// First-order dual number carrying `N` partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<const N: usize> {
    pub v: f64,
    pub d: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub fn constant(v: f64) -> Self {
        Self { v, d: [0.0; N] }
    }

    /// Independent variable number `i` with value `v`.
    pub fn variable(v: f64, i: usize) -> Self {
        let mut d = [0.0; N];
        d[i] = 1.0;
        Self { v, d }
    }

    /// Variable seeded along an arbitrary direction.
    pub fn seeded(v: f64, d: [f64; N]) -> Self {
        Self { v, d }
    }

    #[inline]
    fn chain(self, v: f64, dv: f64) -> Self {
        let mut d = self.d;
        for x in d.iter_mut() {
            *x *= dv;
        }
        Self { v, d }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: Self) -> Self {
        self.v += o.v;
        for i in 0..N {
            self.d[i] += o.d[i];
        }
        self
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: Self) -> Self {
        self.v -= o.v;
        for i in 0..N {
            self.d[i] -= o.d[i];
        }
        self
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = self.v * o.d[i] + self.d[i] * o.v;
        }
        Self { v: self.v * o.v, d }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let v = self.v / o.v;
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = (self.d[i] - v * o.d[i]) / o.v;
        }
        Self { v, d }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self * -1.0
    }
}

impl<const N: usize> Mul<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(mut self, k: f64) -> Self {
        self.v *= k;
        for x in self.d.iter_mut() {
            *x *= k;
        }
        self
    }
}

impl<const N: usize> Add<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, k: f64) -> Self {
        self.v += k;
        self
    }
}

impl<const N: usize> Real for Dual<N> {
    fn cst(v: f64) -> Self {
        Self::constant(v)
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn sin(self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.v.cos(), -self.v.sin())
    }
    fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        self.chain(r, 0.5 / r)
    }
    fn asin(self) -> Self {
        self.chain(self.v.asin(), 1.0 / (1.0 - self.v * self.v).sqrt())
    }
    fn atan2(self, x: Self) -> Self {
        let den = self.v * self.v + x.v * x.v;
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = (x.v * self.d[i] - self.v * x.d[i]) / den;
        }
        Self { v: self.v.atan2(x.v), d }
    }
}

/// Truncated Taylor series `c0 + c1·t + c2·t²` in a single scalar `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Taylor2 {
    pub c: [f64; 3],
}

impl Taylor2 {
    pub fn new(c0: f64, c1: f64, c2: f64) -> Self {
        Self { c: [c0, c1, c2] }
    }

    /// Second time derivative at `t = 0`.
    pub fn second_derivative(&self) -> f64 {
        2.0 * self.c[2]
    }

    #[inline]
    fn compose(self, f0: f64, f1: f64, f2: f64) -> Self {
        // f(a(t)) with f', f'' evaluated at a0
        let [_, a1, a2] = self.c;
        Self::new(f0, f1 * a1, f1 * a2 + 0.5 * f2 * a1 * a1)
    }
}

impl Add for Taylor2 {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.c[0] + o.c[0], self.c[1] + o.c[1], self.c[2] + o.c[2])
    }
}

impl Sub for Taylor2 {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.c[0] - o.c[0], self.c[1] - o.c[1], self.c[2] - o.c[2])
    }
}

impl Mul for Taylor2 {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let [a0, a1, a2] = self.c;
        let [b0, b1, b2] = o.c;
        Self::new(a0 * b0, a0 * b1 + a1 * b0, a0 * b2 + a1 * b1 + a2 * b0)
    }
}

impl Div for Taylor2 {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let [a0, a1, a2] = self.c;
        let [b0, b1, b2] = o.c;
        let q0 = a0 / b0;
        let q1 = (a1 - q0 * b1) / b0;
        let q2 = (a2 - q0 * b2 - q1 * b1) / b0;
        Self::new(q0, q1, q2)
    }
}

impl Neg for Taylor2 {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.c[0], -self.c[1], -self.c[2])
    }
}

impl Mul<f64> for Taylor2 {
    type Output = Self;
    #[inline]
    fn mul(self, k: f64) -> Self {
        Self::new(self.c[0] * k, self.c[1] * k, self.c[2] * k)
    }
}

impl Add<f64> for Taylor2 {
    type Output = Self;
    #[inline]
    fn add(self, k: f64) -> Self {
        Self::new(self.c[0] + k, self.c[1], self.c[2])
    }
}

impl Real for Taylor2 {
    fn cst(v: f64) -> Self {
        Self::new(v, 0.0, 0.0)
    }
    fn value(&self) -> f64 {
        self.c[0]
    }
    fn sin(self) -> Self {
        let (s, c) = self.c[0].sin_cos();
        self.compose(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.c[0].sin_cos();
        self.compose(c, -s, -c)
    }
    fn sqrt(self) -> Self {
        let r = self.c[0].sqrt();
        self.compose(r, 0.5 / r, -0.25 / (r * r * r))
    }
    fn asin(self) -> Self {
        let a = self.c[0];
        let w = 1.0 - a * a;
        self.compose(a.asin(), 1.0 / w.sqrt(), a / (w * w.sqrt()))
    }
    fn atan2(self, x: Self) -> Self {
        let [y0, y1, y2] = self.c;
        let [x0, x1, x2] = x.c;
        // θ̇(t) = (x ẏ − y ẋ) / (x² + y²), expanded to first order in t
        let n0 = x0 * y1 - y0 * x1;
        let n1 = x0 * 2.0 * y2 + x1 * y1 - (y0 * 2.0 * x2 + y1 * x1);
        let d0 = x0 * x0 + y0 * y0;
        let d1 = 2.0 * (x0 * x1 + y0 * y1);
        let r0 = n0 / d0;
        let r1 = (n1 - r0 * d1) / d0;
        Self::new(y0.atan2(x0), r0, 0.5 * r1)
    }
}
