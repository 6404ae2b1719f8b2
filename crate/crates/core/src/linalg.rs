//! Fixed-size 2-D vectors and 2×2 matrices.
//!
//! Everything in the model lives in the plane, so inverses, determinants and
//! Cholesky factors are written out analytically instead of going through a
//! general decomposition routine.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// A point or displacement in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    /// Unit vector pointing at angle `a` (anticlockwise from east).
    pub fn from_angle(a: f64) -> Self {
        let (s, c) = a.sin_cos();
        Vec2 { x: c, y: s }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// `self · selfᵀ`
    pub fn outer(self) -> Mat2 {
        Mat2::new(self.x * self.x, self.x * self.y, self.y * self.x, self.y * self.y)
    }

    pub fn max_abs_diff(self, other: Vec2) -> f64 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2 { x: a[0], y: a[1] }
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

/// Row-major 2×2 matrix `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[[f64; 2]; 2]", into = "[[f64; 2]; 2]")]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Default for Mat2 {
    fn default() -> Self {
        Mat2::IDENTITY
    }
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 { a: 1.0, b: 0.0, c: 0.0, d: 1.0 };
    pub const ZERO: Mat2 = Mat2 { a: 0.0, b: 0.0, c: 0.0, d: 0.0 };

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2 { a, b, c, d }
    }

    pub const fn diag(d1: f64, d2: f64) -> Self {
        Mat2 { a: d1, b: 0.0, c: 0.0, d: d2 }
    }

    /// Symmetric matrix from its three free entries.
    pub const fn sym(s11: f64, s12: f64, s22: f64) -> Self {
        Mat2 { a: s11, b: s12, c: s12, d: s22 }
    }

    pub fn scaled_identity(s: f64) -> Self {
        Mat2::diag(s, s)
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn transpose(&self) -> Mat2 {
        Mat2::new(self.a, self.c, self.b, self.d)
    }

    /// Analytic inverse; `None` when the determinant is zero or not finite.
    pub fn inverse(&self) -> Option<Mat2> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let inv = 1.0 / det;
        Some(Mat2::new(self.d * inv, -self.b * inv, -self.c * inv, self.a * inv))
    }

    pub fn mul_vec(&self, v: Vec2) -> Vec2 {
        Vec2::new(self.a * v.x + self.b * v.y, self.c * v.x + self.d * v.y)
    }

    /// `vᵀ · self · v`
    pub fn quad_form(&self, v: Vec2) -> f64 {
        v.x * (self.a * v.x + self.b * v.y) + v.y * (self.c * v.x + self.d * v.y)
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (self.b - self.c).abs() <= tol * (1.0 + self.b.abs().max(self.c.abs()))
    }

    /// Symmetric positive-definite check (Sylvester's criterion).
    pub fn is_spd(&self) -> bool {
        self.is_finite() && self.is_symmetric(1e-9) && self.a > 0.0 && self.det() > 0.0
    }

    /// Averages the off-diagonal entries.
    pub fn symmetrize(&self) -> Mat2 {
        let off = 0.5 * (self.b + self.c);
        Mat2::sym(self.a, off, self.d)
    }

    /// Lower-triangular `L` with `L·Lᵀ = self`.
    pub fn cholesky(&self) -> Option<Mat2> {
        if !self.is_finite() || self.a <= 0.0 {
            return None;
        }
        let l11 = self.a.sqrt();
        let l21 = self.c / l11;
        let rem = self.d - l21 * l21;
        if rem <= 0.0 {
            return None;
        }
        Some(Mat2::new(l11, 0.0, l21, rem.sqrt()))
    }

    /// Eigenvalues of a symmetric matrix, largest first.
    pub fn sym_eigenvalues(&self) -> (f64, f64) {
        let half_tr = 0.5 * (self.a + self.d);
        let disc = (0.5 * (self.a - self.d)).hypot(self.b);
        (half_tr + disc, half_tr - disc)
    }

    pub fn max_abs_diff(&self, o: &Mat2) -> f64 {
        (self.a - o.a)
            .abs()
            .max((self.b - o.b).abs())
            .max((self.c - o.c).abs())
            .max((self.d - o.d).abs())
    }
}

impl From<[[f64; 2]; 2]> for Mat2 {
    fn from(m: [[f64; 2]; 2]) -> Self {
        Mat2::new(m[0][0], m[0][1], m[1][0], m[1][1])
    }
}

impl From<Mat2> for [[f64; 2]; 2] {
    fn from(m: Mat2) -> Self {
        [[m.a, m.b], [m.c, m.d]]
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        Mat2::new(self.a + o.a, self.b + o.b, self.c + o.c, self.d + o.d)
    }
}

impl AddAssign for Mat2 {
    fn add_assign(&mut self, o: Mat2) {
        *self = *self + o;
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        Mat2::new(self.a - o.a, self.b - o.b, self.c - o.c, self.d - o.d)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }
}

impl Mul<Vec2> for Mat2 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        self.mul_vec(v)
    }
}

impl Mul<f64> for Mat2 {
    type Output = Mat2;
    fn mul(self, s: f64) -> Mat2 {
        Mat2::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_times_self_is_identity() {
        let m = Mat2::new(2.0, 0.3, -0.7, 1.5);
        let prod = m * m.inverse().unwrap();
        assert!(prod.max_abs_diff(&Mat2::IDENTITY) < 1e-14);
        assert!(Mat2::new(1.0, 2.0, 2.0, 4.0).inverse().is_none());
    }

    #[test]
    fn cholesky_reconstructs() {
        let s = Mat2::sym(1.0, -0.25, 0.5);
        let l = s.cholesky().unwrap();
        assert!((l * l.transpose()).max_abs_diff(&s) < 1e-15);
        assert!(Mat2::sym(1.0, 2.0, 1.0).cholesky().is_none());
    }

    #[test]
    fn eigenvalues_of_diagonal() {
        let (l1, l2) = Mat2::diag(0.2, 1.0).sym_eigenvalues();
        assert!((l1 - 1.0).abs() < 1e-15 && (l2 - 0.2).abs() < 1e-15);
    }
}
