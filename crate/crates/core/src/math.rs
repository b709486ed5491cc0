//! Small fixed-size vector/matrix types used by the camera and geometry code.

use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3<F> {
    pub x: F,
    pub y: F,
    pub z: F,
}

impl<F: Real> Vec3<F> {
    pub fn new(x: F, y: F, z: F) -> Self {
        Vec3 { x, y, z }
    }

    pub fn zero() -> Self {
        Vec3::new(F::zero(), F::zero(), F::zero())
    }

    pub fn splat(v: F) -> Self {
        Vec3::new(v, v, v)
    }

    pub fn dot(self, o: Self) -> F {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> F {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Self {
        self * (F::one() / self.norm())
    }

    pub fn cross(self, o: Self) -> Self {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn to_array(self) -> [F; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [F; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn map_f64(self, f: impl Fn(F) -> f64) -> Vec3<f64> {
        Vec3::new(f(self.x), f(self.y), f(self.z))
    }
}

impl<F: Real> std::ops::Add for Vec3<F> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<F: Real> std::ops::Sub for Vec3<F> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<F: Real> std::ops::Mul<F> for Vec3<F> {
    type Output = Self;
    fn mul(self, s: F) -> Self {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<F: Real> std::ops::Neg for Vec3<F> {
    type Output = Self;
    fn neg(self) -> Self {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3<F> {
    pub m: [[F; 3]; 3],
}

impl<F: Real> Mat3<F> {
    pub fn new(m: [[F; 3]; 3]) -> Self {
        Mat3 { m }
    }

    pub fn identity() -> Self {
        let o = F::one();
        let z = F::zero();
        Mat3::new([[o, z, z], [z, o, z], [z, z, o]])
    }

    pub fn transpose(self) -> Self {
        let m = self.m;
        Mat3::new([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn det(self) -> F {
        let m = self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Inverse via the adjugate; returns None when the determinant vanishes.
    pub fn inverse(self) -> Option<Self> {
        let d = self.det();
        if d.abs() <= F::c(1e-300) || !d.is_finite() {
            return None;
        }
        let m = self.m;
        let inv_d = F::one() / d;
        let c = |r1: usize, c1: usize, r2: usize, c2: usize| m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1];
        Some(Mat3::new([
            [c(1, 1, 2, 2) * inv_d, c(0, 2, 2, 1) * inv_d, c(0, 1, 1, 2) * inv_d],
            [c(1, 2, 2, 0) * inv_d, c(0, 0, 2, 2) * inv_d, c(0, 2, 1, 0) * inv_d],
            [c(1, 0, 2, 1) * inv_d, c(0, 1, 2, 0) * inv_d, c(0, 0, 1, 1) * inv_d],
        ]))
    }

    pub fn row(self, i: usize) -> Vec3<F> {
        Vec3::new(self.m[i][0], self.m[i][1], self.m[i][2])
    }

    /// Rotation about one of the coordinate axes (0 = x, 1 = y, 2 = z).
    pub fn rotation_axis(axis: usize, angle: F) -> Self {
        let (s, c) = (angle.sin(), angle.cos());
        let o = F::one();
        let z = F::zero();
        match axis {
            0 => Mat3::new([[o, z, z], [z, c, -s], [z, s, c]]),
            1 => Mat3::new([[c, z, s], [z, o, z], [-s, z, c]]),
            2 => Mat3::new([[c, -s, z], [s, c, z], [z, z, o]]),
            _ => panic!("axis must be 0, 1, or 2"),
        }
    }

    /// Intrinsic Euler composition Rz(roll) * Ry(yaw) * Rx(pitch).
    pub fn rotation_euler(pitch: F, yaw: F, roll: F) -> Self {
        Mat3::rotation_axis(2, roll) * Mat3::rotation_axis(1, yaw) * Mat3::rotation_axis(0, pitch)
    }
}

impl<F: Real> std::ops::Mul<Vec3<F>> for Mat3<F> {
    type Output = Vec3<F>;
    fn mul(self, v: Vec3<F>) -> Vec3<F> {
        Vec3::new(self.row(0).dot(v), self.row(1).dot(v), self.row(2).dot(v))
    }
}

impl<F: Real> std::ops::Mul<Mat3<F>> for Mat3<F> {
    type Output = Mat3<F>;
    fn mul(self, o: Mat3<F>) -> Mat3<F> {
        let mut out = [[F::zero(); 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.m[i][0] * o.m[0][j] + self.m[i][1] * o.m[1][j] + self.m[i][2] * o.m[2][j];
            }
        }
        Mat3::new(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_times_matrix_is_identity() {
        let m = Mat3::new([[2.0, 1.0, 0.3], [0.1, 3.0, -0.5], [-0.2, 0.4, 1.5]]);
        let inv = m.inverse().unwrap();
        let p: Mat3<f64> = inv * m;
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((p.m[i][j] - expect).abs() < 1e-12, "({i},{j}) = {}", p.m[i][j]);
            }
        }
    }

    #[test]
    fn singular_matrix_has_no_inverse() {
        let m: Mat3<f64> = Mat3::new([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 1.0, 1.0]]);
        assert!(m.inverse().is_none());
    }

    #[test]
    fn axis_rotations_are_orthonormal() {
        for axis in 0..3 {
            let r: Mat3<f64> = Mat3::rotation_axis(axis, 0.7);
            let rt_r = r.transpose() * r;
            for i in 0..3 {
                for j in 0..3 {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((rt_r.m[i][j] - expect).abs() < 1e-14);
                }
            }
            assert!((r.det() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn rotation_z_quarter_turn_maps_x_to_y() {
        let r: Mat3<f64> = Mat3::rotation_axis(2, std::f64::consts::FRAC_PI_2);
        let v = r * Vec3::new(1.0, 0.0, 0.0);
        assert!((v.x).abs() < 1e-15 && (v.y - 1.0).abs() < 1e-15);
    }
}
