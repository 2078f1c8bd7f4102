use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// One of the two disc coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Second-order Taylor data of a scalar with respect to the disc coordinates
/// `(x, y)`: value, gradient `(∂x, ∂y)` and the packed symmetric Hessian
/// `(∂xx, ∂xy, ∂yy)`.
#[derive(Clone, Copy, PartialEq, Default)]
pub struct Jet2 {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [f64; 3],
}

impl fmt::Debug for Jet2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Jet2 {{ v: {:e}, g: [{:e}, {:e}], h: [{:e}, {:e}, {:e}] }}",
            self.value, self.grad[0], self.grad[1], self.hess[0], self.hess[1], self.hess[2]
        )
    }
}

impl Jet2 {
    pub const ZERO: Jet2 = Jet2 { value: 0.0, grad: [0.0; 2], hess: [0.0; 3] };

    pub fn new(value: f64, grad: [f64; 2], hess: [f64; 3]) -> Self {
        Self { value, grad, hess }
    }

    pub fn constant(value: f64) -> Self {
        Self { value, ..Self::ZERO }
    }

    /// Seeds an independent variable: unit gradient along `axis`, zero Hessian.
    pub fn input(axis: Axis, value: f64) -> Self {
        let grad = match axis {
            Axis::X => [1.0, 0.0],
            Axis::Y => [0.0, 1.0],
        };
        Self { value, grad, hess: [0.0; 3] }
    }

    /// Convenience for the common `(x, y)` seeding.
    pub fn seed(x: f64, y: f64) -> (Self, Self) {
        (Self::input(Axis::X, x), Self::input(Axis::Y, y))
    }

    /// `[value, ∂x, ∂y, ∂xx, ∂xy, ∂yy]`
    pub fn to_array(self) -> [f64; 6] {
        [self.value, self.grad[0], self.grad[1], self.hess[0], self.hess[1], self.hess[2]]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self { value: a[0], grad: [a[1], a[2]], hess: [a[3], a[4], a[5]] }
    }

    /// Full 2×2 Hessian.
    pub fn hessian(&self) -> [[f64; 2]; 2] {
        [[self.hess[0], self.hess[1]], [self.hess[1], self.hess[2]]]
    }

    /// Flat Laplacian `∂xx + ∂yy`.
    pub fn laplacian(&self) -> f64 {
        self.hess[0] + self.hess[2]
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.grad.iter().all(|g| g.is_finite()) && self.hess.iter().all(|h| h.is_finite())
    }

    pub fn scale(self, c: f64) -> Self {
        Self {
            value: self.value * c,
            grad: [self.grad[0] * c, self.grad[1] * c],
            hess: [self.hess[0] * c, self.hess[1] * c, self.hess[2] * c],
        }
    }

    /// Composition `f ∘ self` given `f(v), f'(v), f''(v)` at `v = self.value`.
    #[inline]
    pub fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        let [gx, gy] = self.grad;
        Self {
            value: f0,
            grad: [f1 * gx, f1 * gy],
            hess: [
                f1 * self.hess[0] + f2 * gx * gx,
                f1 * self.hess[1] + f2 * gx * gy,
                f1 * self.hess[2] + f2 * gy * gy,
            ],
        }
    }

    pub fn exp(self) -> Self {
        let e = self.value.exp();
        self.chain(e, e, e)
    }

    pub fn tanh(self) -> Self {
        let t = self.value.tanh();
        let d1 = 1.0 - t * t;
        self.chain(t, d1, -2.0 * t * d1)
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn ln(self) -> Result<Self> {
        if self.value <= 0.0 || self.value.is_nan() {
            return Err(Error::Domain { op: "ln", value: self.value });
        }
        let r = 1.0 / self.value;
        Ok(self.chain(self.value.ln(), r, -r * r))
    }

    pub fn sqrt(self) -> Result<Self> {
        if self.value <= 0.0 || self.value.is_nan() {
            return Err(Error::Domain { op: "sqrt", value: self.value });
        }
        let s = self.value.sqrt();
        let d1 = 0.5 / s;
        Ok(self.chain(s, d1, -0.5 * d1 / self.value))
    }

    pub fn recip(self) -> Result<Self> {
        if self.value == 0.0 || self.value.is_nan() {
            return Err(Error::Domain { op: "recip", value: self.value });
        }
        let r = 1.0 / self.value;
        Ok(self.chain(r, -r * r, 2.0 * r * r * r))
    }

    pub fn try_div(self, rhs: Self) -> Result<Self> {
        if rhs.value == 0.0 || rhs.value.is_nan() {
            return Err(Error::Domain { op: "div", value: rhs.value });
        }
        Ok(self * rhs.recip()?)
    }

    /// Integer power. Negative exponents require a nonzero value.
    pub fn powi(self, n: i32) -> Result<Self> {
        if n == 0 {
            return Ok(Self::constant(1.0));
        }
        if n < 0 && self.value == 0.0 {
            return Err(Error::Domain { op: "powi", value: self.value });
        }
        let v = self.value;
        let nf = n as f64;
        let f0 = v.powi(n);
        let f1 = nf * v.powi(n - 1);
        let f2 = if n == 1 { 0.0 } else { nf * (nf - 1.0) * v.powi(n - 2) };
        Ok(self.chain(f0, f1, f2))
    }

    pub fn square(self) -> Self {
        self * self
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    #[inline]
    fn add(self, o: Jet2) -> Jet2 {
        Jet2 {
            value: self.value + o.value,
            grad: [self.grad[0] + o.grad[0], self.grad[1] + o.grad[1]],
            hess: [self.hess[0] + o.hess[0], self.hess[1] + o.hess[1], self.hess[2] + o.hess[2]],
        }
    }
}

impl AddAssign for Jet2 {
    fn add_assign(&mut self, o: Jet2) {
        *self = *self + o;
    }
}

impl Add<f64> for Jet2 {
    type Output = Jet2;
    fn add(mut self, c: f64) -> Jet2 {
        self.value += c;
        self
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    #[inline]
    fn sub(self, o: Jet2) -> Jet2 {
        self + (-o)
    }
}

impl Sub<f64> for Jet2 {
    type Output = Jet2;
    fn sub(mut self, c: f64) -> Jet2 {
        self.value -= c;
        self
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    /// Second-order Leibniz rule.
    #[inline]
    fn mul(self, o: Jet2) -> Jet2 {
        let (a, b) = (self, o);
        Jet2 {
            value: a.value * b.value,
            grad: [a.grad[0] * b.value + a.value * b.grad[0], a.grad[1] * b.value + a.value * b.grad[1]],
            hess: [
                a.hess[0] * b.value + 2.0 * a.grad[0] * b.grad[0] + a.value * b.hess[0],
                a.hess[1] * b.value + a.grad[0] * b.grad[1] + a.grad[1] * b.grad[0] + a.value * b.hess[1],
                a.hess[2] * b.value + 2.0 * a.grad[1] * b.grad[1] + a.value * b.hess[2],
            ],
        }
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, c: f64) -> Jet2 {
        self.scale(c)
    }
}

impl Mul<Jet2> for f64 {
    type Output = Jet2;
    fn mul(self, j: Jet2) -> Jet2 {
        j.scale(self)
    }
}

/// A complex-valued jet `re + i·im`, used for the Cartesian Fourier modes
/// `(x + iy)^m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexJet {
    pub re: Jet2,
    pub im: Jet2,
}

impl ComplexJet {
    pub const ONE: ComplexJet = ComplexJet { re: Jet2 { value: 1.0, grad: [0.0; 2], hess: [0.0; 3] }, im: Jet2::ZERO };

    pub fn new(re: Jet2, im: Jet2) -> Self {
        Self { re, im }
    }

    pub fn conj(self) -> Self {
        Self { re: self.re, im: -self.im }
    }

    /// Real part of `c · self` for a complex constant `c = (cr, ci)`.
    pub fn re_scaled(self, cr: f64, ci: f64) -> Jet2 {
        self.re.scale(cr) - self.im.scale(ci)
    }

    pub fn scale(self, s: Jet2) -> Self {
        Self { re: self.re * s, im: self.im * s }
    }
}

impl Mul for ComplexJet {
    type Output = ComplexJet;
    fn mul(self, o: ComplexJet) -> ComplexJet {
        ComplexJet { re: self.re * o.re - self.im * o.im, im: self.re * o.im + self.im * o.re }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn seeds() {
        let x = Jet2::input(Axis::X, 0.3);
        assert_eq!(x.to_array(), [0.3, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let y = Jet2::input(Axis::Y, -0.5);
        assert_eq!(y.to_array(), [-0.5, 0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn product_of_seeds() {
        let p = Jet2::input(Axis::X, 2.0) * Jet2::input(Axis::Y, 3.0);
        assert_eq!(p.value, 6.0);
        assert_eq!(p.grad, [3.0, 2.0]);
        assert_eq!(p.hess, [0.0, 1.0, 0.0]);
    }

    #[test]
    fn tanh_at_zero() {
        let t = Jet2::input(Axis::X, 0.0).tanh();
        assert_eq!(t.to_array(), [0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn exp_at_zero() {
        let e = Jet2::input(Axis::X, 0.0).exp();
        assert_eq!(e.to_array(), [1.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn x_squared_y() {
        // f = x²y at (1, 2): grad (2xy, x²) = (4, 1); hess (2y, 2x, 0) = (4, 2, 0)
        let (x, y) = Jet2::seed(1.0, 2.0);
        let f = x * x * y;
        assert_eq!(f.to_array(), [2.0, 4.0, 1.0, 4.0, 2.0, 0.0]);
    }

    #[test]
    fn constant_has_no_derivatives() {
        let c = Jet2::constant(3.5).exp().sin();
        assert_eq!(c.grad, [0.0; 2]);
        assert_eq!(c.hess, [0.0; 3]);
    }

    #[test]
    fn domain_errors() {
        let z = Jet2::constant(0.0);
        assert!(matches!(z.ln(), Err(Error::Domain { op: "ln", .. })));
        assert!(matches!(Jet2::constant(-1.0).sqrt(), Err(Error::Domain { op: "sqrt", .. })));
        assert!(Jet2::constant(1.0).try_div(z).is_err());
        assert!(z.powi(-2).is_err());
        assert!(z.powi(2).is_ok());
    }

    #[test]
    fn quotient_rule() {
        let (x, y) = Jet2::seed(0.7, -0.4);
        let q = x.try_div(y * y + 1.0).unwrap();
        // d/dx = 1/(y²+1); d/dy = -2xy/(y²+1)²
        let d = 0.16 + 1.0;
        assert_relative_eq!(q.grad[0], 1.0 / d, epsilon = 1e-15);
        assert_relative_eq!(q.grad[1], -2.0 * 0.7 * -0.4 / (d * d), epsilon = 1e-15);
    }

    #[test]
    fn complex_power_matches_polar() {
        let (x, y) = Jet2::seed(0.3, 0.4);
        let z = ComplexJet::new(x, y);
        let z3 = z * z * z;
        let (r, th) = (0.5f64, 0.4f64.atan2(0.3));
        assert_relative_eq!(z3.re.value, r.powi(3) * (3.0 * th).cos(), epsilon = 1e-15);
        assert_relative_eq!(z3.im.value, r.powi(3) * (3.0 * th).sin(), epsilon = 1e-15);
        // holomorphic: ∂x(z³) = 3z², Cauchy–Riemann on the real part
        assert_relative_eq!(z3.re.grad[0], z3.im.grad[1], epsilon = 1e-14);
        assert_relative_eq!(z3.re.laplacian(), 0.0, epsilon = 1e-14);
    }
}
