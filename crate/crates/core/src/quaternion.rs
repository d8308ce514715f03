//! Quaternion scalar algebra.
//!
//! A quaternion `r + xi + yj + zk` is stored as four `f64` components. The
//! 4×4 real matrix form ([`QuatMatrix4`]) is laid out row by row as
//!
//! ```text
//!  r  x  y  z
//! -x  r -z  y
//! -y  z  r -x
//! -z -y  x  r
//! ```
//!
//! With this layout `matrix(a)·matrix(b) = matrix(a ⊗ b)`, and since the
//! first row of `matrix(q)` is `q` itself, the row vector `aᵀ·matrix(b)`
//! equals `a ⊗ b`.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Quaternion {
    pub r: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const ZERO: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 0.0);
    pub const ONE: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);
    pub const I: Quaternion = Quaternion::new(0.0, 1.0, 0.0, 0.0);
    pub const J: Quaternion = Quaternion::new(0.0, 0.0, 1.0, 0.0);
    pub const K: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 1.0);

    pub const fn new(r: f64, x: f64, y: f64, z: f64) -> Self {
        Quaternion { r, x, y, z }
    }

    pub fn from_array(c: [f64; 4]) -> Self {
        Quaternion::new(c[0], c[1], c[2], c[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.r, self.x, self.y, self.z]
    }

    /// Hamilton product `self ⊗ rhs`.
    pub fn hamilton(self, rhs: Quaternion) -> Quaternion {
        let (r1, x1, y1, z1) = (self.r, self.x, self.y, self.z);
        let (r2, x2, y2, z2) = (rhs.r, rhs.x, rhs.y, rhs.z);
        Quaternion {
            r: r1 * r2 - x1 * x2 - y1 * y2 - z1 * z2,
            x: r1 * x2 + x1 * r2 + y1 * z2 - z1 * y2,
            y: r1 * y2 - x1 * z2 + y1 * r2 + z1 * x2,
            z: r1 * z2 + x1 * y2 - y1 * x2 + z1 * r2,
        }
    }

    pub fn conjugate(self) -> Quaternion {
        Quaternion::new(self.r, -self.x, -self.y, -self.z)
    }

    pub fn norm(self) -> f64 {
        (self.r * self.r + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// `self / |self|`. The zero quaternion has no direction and is rejected.
    pub fn unit(self) -> Result<Quaternion> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::ZeroQuaternion);
        }
        Ok(self.scale(1.0 / n))
    }

    pub fn scale(self, s: f64) -> Quaternion {
        Quaternion::new(self.r * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn to_real_matrix(self) -> QuatMatrix4 {
        let Quaternion { r, x, y, z } = self;
        QuatMatrix4([
            [r, x, y, z],
            [-x, r, -z, y],
            [-y, z, r, -x],
            [-z, -y, x, r],
        ])
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, rhs: Quaternion) -> Quaternion {
        self.hamilton(rhs)
    }
}

impl Add for Quaternion {
    type Output = Quaternion;

    fn add(self, rhs: Quaternion) -> Quaternion {
        Quaternion::new(self.r + rhs.r, self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Quaternion {
    type Output = Quaternion;

    fn sub(self, rhs: Quaternion) -> Quaternion {
        Quaternion::new(self.r - rhs.r, self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;

    fn neg(self) -> Quaternion {
        self.scale(-1.0)
    }
}

/// Real 4×4 representation of a quaternion, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuatMatrix4(pub [[f64; 4]; 4]);

impl QuatMatrix4 {
    pub fn identity() -> Self {
        Quaternion::ONE.to_real_matrix()
    }

    pub fn matmul(&self, rhs: &QuatMatrix4) -> QuatMatrix4 {
        let mut out = [[0.0; 4]; 4];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..4).map(|k| self.0[i][k] * rhs.0[k][j]).sum();
            }
        }
        QuatMatrix4(out)
    }

    /// Row vector times matrix: `vᵀ · self`.
    pub fn row_mul(&self, v: [f64; 4]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (j, o) in out.iter_mut().enumerate() {
            *o = (0..4).map(|k| v[k] * self.0[k][j]).sum();
        }
        out
    }

    /// Matrix times column vector: `self · v`.
    pub fn mul_vec(&self, v: [f64; 4]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..4).map(|k| self.0[i][k] * v[k]).sum();
        }
        out
    }

    pub fn max_abs_diff(&self, other: &QuatMatrix4) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(r: f64, x: f64, y: f64, z: f64) -> Quaternion {
        Quaternion::new(r, x, y, z)
    }

    fn close(a: Quaternion, b: Quaternion, tol: f64) -> bool {
        (a - b).to_array().iter().all(|d| d.abs() <= tol)
    }

    #[test]
    fn basis_relations() {
        assert_eq!(Quaternion::I * Quaternion::J, Quaternion::K);
        assert_eq!(Quaternion::J * Quaternion::I, -Quaternion::K);
        let minus_one = q(-1.0, 0.0, 0.0, 0.0);
        assert_eq!(Quaternion::I * Quaternion::I, minus_one);
        assert_eq!(Quaternion::J * Quaternion::J, minus_one);
        assert_eq!(Quaternion::K * Quaternion::K, minus_one);
        assert_eq!(Quaternion::I * Quaternion::J * Quaternion::K, minus_one);
    }

    #[test]
    fn hamilton_worked_example() {
        // Hand-expanded from the row-vector matrix form.
        let a = q(1.0, 2.0, 3.0, 4.0);
        let b = q(5.0, 6.0, 7.0, 8.0);
        assert_eq!(a * b, q(-60.0, 12.0, 30.0, 24.0));
        assert_eq!(b.to_real_matrix().row_mul(a.to_array()), [-60.0, 12.0, 30.0, 24.0]);
    }

    #[test]
    fn identity_element() {
        let a = q(0.3, -1.2, 7.0, 2.5);
        assert_eq!(a * Quaternion::ONE, a);
        assert_eq!(Quaternion::ONE * a, a);
    }

    #[test]
    fn conjugate_examples() {
        assert_eq!(q(1.0, 2.0, 3.0, 4.0).conjugate(), q(1.0, -2.0, -3.0, -4.0));
        assert_eq!(q(5.0, 0.0, 0.0, 0.0).conjugate(), q(5.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn norm_and_unit() {
        assert_eq!(Quaternion::ZERO.norm(), 0.0);
        assert_eq!(q(1.0, 1.0, 1.0, 1.0).norm(), 2.0);
        assert_eq!(q(2.0, 0.0, 0.0, 0.0).unit().unwrap(), Quaternion::ONE);
        assert!(close(q(0.0, 3.0, 4.0, 0.0).unit().unwrap(), q(0.0, 0.6, 0.8, 0.0), 1e-15));
        assert_eq!(q(1.0, 1.0, 1.0, 1.0).unit().unwrap(), q(0.5, 0.5, 0.5, 0.5));
        assert!(matches!(Quaternion::ZERO.unit(), Err(Error::ZeroQuaternion)));
    }

    #[test]
    fn matrix_layout() {
        assert_eq!(Quaternion::ONE.to_real_matrix(), QuatMatrix4([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]));
        let m = Quaternion::I.to_real_matrix().0;
        // 1-based (1,2)=1, (2,1)=-1, (3,4)=-1, (4,3)=1
        assert_eq!(m[0][1], 1.0);
        assert_eq!(m[1][0], -1.0);
        assert_eq!(m[2][3], -1.0);
        assert_eq!(m[3][2], 1.0);
        let nonzero = m.iter().flatten().filter(|v| **v != 0.0).count();
        assert_eq!(nonzero, 4);
    }

    fn quat() -> impl Strategy<Value = Quaternion> {
        prop::array::uniform4(-10.0f64..10.0).prop_map(Quaternion::from_array)
    }

    proptest! {
        #[test]
        fn associative(a in quat(), b in quat(), c in quat()) {
            prop_assert!(close((a * b) * c, a * (b * c), 1e-9));
        }

        #[test]
        fn norm_is_multiplicative(a in quat(), b in quat()) {
            prop_assert!(((a * b).norm() - a.norm() * b.norm()).abs() <= 1e-10 * (1.0 + a.norm() * b.norm()));
        }

        #[test]
        fn conjugate_reverses_products(a in quat(), b in quat()) {
            prop_assert!(close((a * b).conjugate(), b.conjugate() * a.conjugate(), 1e-12));
        }

        #[test]
        fn matrix_is_homomorphism(a in quat(), b in quat()) {
            let lhs = a.to_real_matrix().matmul(&b.to_real_matrix());
            prop_assert!(lhs.max_abs_diff(&(a * b).to_real_matrix()) <= 1e-10);
        }

        #[test]
        fn row_vector_form_matches_hamilton(a in quat(), b in quat()) {
            let via_matrix = Quaternion::from_array(b.to_real_matrix().row_mul(a.to_array()));
            prop_assert!(close(via_matrix, a * b, 1e-12));
        }

        #[test]
        fn unit_has_norm_one(a in quat()) {
            prop_assume!(a.norm() > 1e-6);
            prop_assert!((a.unit().unwrap().norm() - 1.0).abs() < 1e-12);
        }
    }
}
