//! Small fixed-size algebra for 2-vectors and symmetric 2×2 tensors.

use nalgebra::{Matrix3, Vector3};
use std::ops::{Add, Mul, Neg, Sub};

pub type Vec2 = [f64; 2];

#[inline]
pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn norm(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}

/// Symmetric 2×2 tensor stored by its three independent entries, so `A = Aᵀ`
/// holds by construction.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymTensor2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl SymTensor2 {
    pub const ZERO: SymTensor2 = SymTensor2 {
        xx: 0.0,
        xy: 0.0,
        yy: 0.0,
    };

    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        SymTensor2 { xx, xy, yy }
    }

    pub const fn diag(a: f64, b: f64) -> Self {
        SymTensor2::new(a, 0.0, b)
    }

    /// Symmetric part `½(G + Gᵀ)` of a full gradient `G[i][j] = ∂ⱼuᵢ`.
    pub fn sym_part(g: [[f64; 2]; 2]) -> Self {
        SymTensor2::new(g[0][0], 0.5 * (g[0][1] + g[1][0]), g[1][1])
    }

    /// Frobenius product `A : B`.
    #[inline]
    pub fn ddot(&self, other: &SymTensor2) -> f64 {
        self.xx * other.xx + 2.0 * self.xy * other.xy + self.yy * other.yy
    }

    /// Frobenius norm.
    #[inline]
    pub fn norm(&self) -> f64 {
        self.ddot(self).sqrt()
    }

    /// Coordinates in the orthonormal basis `{e₁⊗e₁, (e₁⊗e₂ + e₂⊗e₁)/√2, e₂⊗e₂}`,
    /// so that `A : B = to_vector(A) · to_vector(B)`.
    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.xx, std::f64::consts::SQRT_2 * self.xy, self.yy)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        SymTensor2::new(v[0], v[1] / std::f64::consts::SQRT_2, v[2])
    }

    pub fn is_finite(&self) -> bool {
        self.xx.is_finite() && self.xy.is_finite() && self.yy.is_finite()
    }
}

impl Add for SymTensor2 {
    type Output = SymTensor2;
    fn add(self, o: SymTensor2) -> SymTensor2 {
        SymTensor2::new(self.xx + o.xx, self.xy + o.xy, self.yy + o.yy)
    }
}

impl Sub for SymTensor2 {
    type Output = SymTensor2;
    fn sub(self, o: SymTensor2) -> SymTensor2 {
        SymTensor2::new(self.xx - o.xx, self.xy - o.xy, self.yy - o.yy)
    }
}

impl Neg for SymTensor2 {
    type Output = SymTensor2;
    fn neg(self) -> SymTensor2 {
        SymTensor2::new(-self.xx, -self.xy, -self.yy)
    }
}

impl Mul<SymTensor2> for f64 {
    type Output = SymTensor2;
    fn mul(self, a: SymTensor2) -> SymTensor2 {
        SymTensor2::new(self * a.xx, self * a.xy, self * a.yy)
    }
}

/// Derivative of a map on symmetric tensors, expressed in the orthonormal
/// coordinates of [`SymTensor2::to_vector`].
pub type SymTangent = Matrix3<f64>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_coordinates_preserve_frobenius_product() {
        let a = SymTensor2::new(1.0, -2.0, 0.5);
        let b = SymTensor2::new(-0.3, 0.7, 4.0);
        assert!((a.ddot(&b) - a.to_vector().dot(&b.to_vector())).abs() < 1e-14);
        assert_eq!(SymTensor2::from_vector(&a.to_vector()), a);
    }

    #[test]
    fn frobenius_norm_of_off_diagonal() {
        // [[0, 1], [1, 0]] has Frobenius norm √2
        let a = SymTensor2::new(0.0, 1.0, 0.0);
        assert!((a.norm() - 2f64.sqrt()).abs() < 1e-15);
    }
}
