use nalgebra::{Matrix3, Vector3};

use super::{MetricsError, Result};

/// Orthogonality and determinant tolerance for [`RotationMatrix::new`].
pub const ROTATION_TOL: f64 = 1e-9;

/// A validated element of SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let orth = (m.transpose() * m - Matrix3::identity()).amax();
        let det = m.determinant();
        if !(orth <= ROTATION_TOL) || !((det - 1.0).abs() <= ROTATION_TOL) {
            return Err(MetricsError::NotRotation { orthogonality: orth, det });
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        so3_log(self).1
    }
}

impl std::ops::Mul for RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: Self) -> Self {
        Self(self.0 * rhs.0)
    }
}

/// Rotation about z by `phi` radians.
pub fn rot_z(phi: f64) -> RotationMatrix {
    let (s, c) = phi.sin_cos();
    RotationMatrix(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
}

/// Axis and angle of `R`, angle in `[0, pi]`.
///
/// The angle comes from `atan2(|w|, (tr R - 1) / 2)` with `w` the axial vector
/// of the skew part, which stays accurate near both 0 and pi where `acos`
/// loses half the digits. Beyond pi/2 the axis is read off the symmetric part
/// `(R + R^T)/2 = cos(a) I + (1 - cos(a)) n n^T` instead of the vanishing skew
/// part. At angle 0 the axis defaults to z.
pub fn so3_log(r: &RotationMatrix) -> (Vector3<f64>, f64) {
    let m = &r.0;
    let w = 0.5 * Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    let c = 0.5 * (m.trace() - 1.0);
    let s = w.norm();
    let angle = s.atan2(c);
    if c >= 0.0 {
        let axis = if s > 0.0 { w / s } else { Vector3::z() };
        return (axis, angle);
    }
    let sym = 0.5 * (m + m.transpose());
    let outer = (sym - Matrix3::identity() * c) / (1.0 - c);
    let j = (0..3).max_by(|&a, &b| outer[(a, a)].total_cmp(&outer[(b, b)])).unwrap_or(0);
    let mut axis: Vector3<f64> = outer.column(j).into_owned() / outer[(j, j)].sqrt();
    axis.normalize_mut();
    if axis.dot(&w) < 0.0 {
        axis = -axis;
    }
    (axis, angle)
}

/// Rotation vector `theta * n` of `R`.
pub fn so3_log_vec(r: &RotationMatrix) -> Vector3<f64> {
    let (axis, angle) = so3_log(r);
    axis * angle
}

/// Rodrigues exponential of a rotation vector.
pub fn so3_exp(omega: &Vector3<f64>) -> RotationMatrix {
    let theta = omega.norm();
    let k = omega.cross_matrix();
    let (a, b) = if theta < 1e-6 {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
    } else {
        let half = (0.5 * theta).sin();
        (theta.sin() / theta, 2.0 * half * half / (theta * theta))
    };
    RotationMatrix(Matrix3::identity() + k * a + k * k * b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn rot_z_basics() {
        assert_eq!(rot_z(0.0), RotationMatrix::identity());
        let x = rot_z(FRAC_PI_2).matrix() * Vector3::x();
        assert_abs_diff_eq!(x, Vector3::y(), epsilon = 1e-15);
    }

    #[test]
    fn small_rotation_log() {
        let (axis, angle) = so3_log(&rot_z(0.001));
        assert_abs_diff_eq!(angle, 0.001, epsilon = 1e-15);
        assert_abs_diff_eq!(axis, Vector3::z(), epsilon = 1e-12);
        let (axis, angle) = so3_log(&RotationMatrix::identity());
        assert_eq!(angle, 0.0);
        assert_abs_diff_eq!(axis.norm(), 1.0);
    }

    #[test]
    fn half_turn_log() {
        let n = Vector3::new(1.0, -2.0, 0.5).normalize();
        let (axis, angle) = so3_log(&so3_exp(&(n * PI)));
        assert_abs_diff_eq!(angle, PI, epsilon = 1e-12);
        assert_abs_diff_eq!(axis.dot(&n).abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_non_rotations() {
        assert!(RotationMatrix::new(Matrix3::identity() * 1.01).is_err());
        assert!(RotationMatrix::new(Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0))).is_err());
        assert!(RotationMatrix::new(*rot_z(0.3).matrix()).is_ok());
    }

    fn arb_rotation_vector() -> impl Strategy<Value = Vector3<f64>> {
        let axis = (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_filter("nonzero axis", |(x, y, z)| x * x + y * y + z * z > 1e-4)
            .prop_map(|(x, y, z)| Vector3::new(x, y, z).normalize());
        let angle = prop_oneof![
            0.0f64..1e-7,
            0.0f64..PI,
            (0.0f64..1e-7).prop_map(|e| PI - e),
        ];
        (axis, angle).prop_map(|(a, t)| a * t)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn exp_log_round_trip(omega in arb_rotation_vector()) {
            let r = so3_exp(&omega);
            prop_assert!(RotationMatrix::new(*r.matrix()).is_ok());
            let back = so3_exp(&so3_log_vec(&r));
            prop_assert!((back.matrix() - r.matrix()).amax() < 1e-9);
            let (_, angle) = so3_log(&r);
            prop_assert!((angle - omega.norm()).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn rot_z_group_law(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let lhs = rot_z(a) * rot_z(b);
            prop_assert!((lhs.matrix() - rot_z(a + b).matrix()).amax() < 1e-12);
        }
    }
}
