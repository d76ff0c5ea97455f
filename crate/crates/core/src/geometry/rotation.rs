use crate::error::{Error, Result};
use crate::tolerances::{ROTATION_ORTHONORMALITY, SMALL_ANGLE};
use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

/// Skew-symmetric matrix with `hat(w) x = w × x`.
pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// An element of SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl Default for RotationMatrix {
    fn default() -> Self {
        Self::identity()
    }
}

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Validates orthonormality and orientation.
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let r = Self(m);
        if r.orthonormality_defect() > ROTATION_ORTHONORMALITY {
            return Err(Error::InvalidArgument(format!(
                "matrix is not a rotation (defect {:e})",
                r.orthonormality_defect()
            )));
        }
        Ok(r)
    }

    /// Wraps a matrix the caller knows to be a rotation.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    pub fn from_row_major(v: &[f64; 9]) -> Result<Self> {
        Self::new(Matrix3::from_row_slice(v))
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self(self.0 * other.0)
    }

    /// max(‖RᵀR − I‖_F, |det R − 1|).
    pub fn orthonormality_defect(&self) -> f64 {
        let gram = (self.0.transpose() * self.0 - Matrix3::identity()).norm();
        gram.max((self.0.determinant() - 1.0).abs())
    }

    /// Rodrigues formula, with a second-order series below [`SMALL_ANGLE`].
    pub fn exp(w: &Vector3<f64>) -> Self {
        let theta2 = w.norm_squared();
        let theta = theta2.sqrt();
        let k = hat(w);
        let (a, b) = if theta < SMALL_ANGLE {
            (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
        } else {
            (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
        };
        Self(Matrix3::identity() + k * a + k * k * b)
    }

    /// Axis-angle vector of the rotation, with angle in [0, π].
    pub fn log(&self) -> Vector3<f64> {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.0));
        q.scaled_axis()
    }
}
