//! Rigid-body representation: Euler-angle rotations, rigid transforms and the
//! column-stacking vectorization used by the rotation gradients.

use nalgebra::{Matrix3, Matrix3xX, SMatrix, SVector, Vector3};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Tolerance used when accepting a matrix as a rotation.
pub const SO3_TOL: f64 = 1e-9;
const GIMBAL_TOL: f64 = 1e-12;

pub type Vec9 = SVector<f64, 9>;
pub type Mat9 = SMatrix<f64, 9, 9>;
pub type Mat93 = SMatrix<f64, 9, 3>;

/// Roll (`alpha`, about x), pitch (`beta`, about y) and yaw (`gamma`, about z)
/// in radians, each stored in `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

fn wrap_angle(x: f64) -> f64 {
    let mut y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        y += 2.0 * PI;
    }
    y
}

impl EulerAngles {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite() && gamma.is_finite()) {
            return Err(Error::InvalidParameter("Euler angles must be finite".into()));
        }
        Ok(Self {
            alpha: wrap_angle(alpha),
            beta: wrap_angle(beta),
            gamma: wrap_angle(gamma),
        })
    }

    pub fn from_degrees(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        Self::new(alpha.to_radians(), beta.to_radians(), gamma.to_radians())
    }

    pub fn to_degrees(self) -> [f64; 3] {
        [self.alpha.to_degrees(), self.beta.to_degrees(), self.gamma.to_degrees()]
    }
}

/// A 3×3 matrix known to lie in SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if is_so3(&m, SO3_TOL) {
            Ok(Self(m))
        } else {
            Err(Error::NotRotation)
        }
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn from_euler(angles: EulerAngles) -> Self {
        rotation_from_euler(angles)
    }

    /// Rotation `exp([w]×)` for an axis-angle vector `w` (Rodrigues).
    pub fn exp(w: &Vector3<f64>) -> Self {
        let theta = w.norm();
        let k = skew(w);
        if theta < 1e-12 {
            return Self(Matrix3::identity() + k);
        }
        let a = theta.sin() / theta;
        let b = (1.0 - theta.cos()) / (theta * theta);
        Self(Matrix3::identity() + k * a + k * k * b)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Matrix3<f64> {
        self.0
    }

    pub fn compose(&self, other: &RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * other.0)
    }

    pub fn to_euler(&self) -> EulerDecomposition {
        euler_from_rotation(self)
    }
}

/// Landmark coordinates, one column per landmark.
#[derive(Debug, Clone, PartialEq)]
pub struct Conformation(Matrix3xX<f64>);

impl Conformation {
    pub fn new(m: Matrix3xX<f64>) -> Result<Self> {
        if m.ncols() == 0 {
            return Err(Error::InvalidParameter("conformation needs at least one landmark".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("conformation entries must be finite".into()));
        }
        Ok(Self(m))
    }

    pub fn from_columns(cols: &[Vector3<f64>]) -> Result<Self> {
        Self::new(Matrix3xX::from_columns(cols))
    }

    /// Builds from three coordinate rows (x, y, z).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() != 3 || rows[1].len() != rows[0].len() || rows[2].len() != rows[0].len() {
            return Err(Error::InvalidParameter("conformation must be 3 equal-length rows".into()));
        }
        let n = rows[0].len();
        Self::new(Matrix3xX::from_fn(n, |i, j| rows[i][j]))
    }

    pub fn len(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.0.ncols() == 0
    }

    pub fn column(&self, n: usize) -> Vector3<f64> {
        self.0.column(n).into_owned()
    }

    pub fn columns(&self) -> impl Iterator<Item = Vector3<f64>> + '_ {
        self.0.column_iter().map(|c| c.into_owned())
    }

    pub fn matrix(&self) -> &Matrix3xX<f64> {
        &self.0
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.0.column_mean()
    }
}

/// Rotation and translation of the target body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: RotationMatrix,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: RotationMatrix, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(RotationMatrix::identity(), Vector3::zeros())
    }

    /// `Q c + t` for one landmark.
    pub fn transform(&self, c: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.matrix() * c + self.translation
    }
}

/// `Q_z(γ) Q_y(β) Q_x(α)`, written out entrywise.
pub fn rotation_from_euler(angles: EulerAngles) -> RotationMatrix {
    let (sa, ca) = angles.alpha.sin_cos();
    let (sb, cb) = angles.beta.sin_cos();
    let (sg, cg) = angles.gamma.sin_cos();
    RotationMatrix(Matrix3::new(
        cb * cg,
        sa * sb * cg - ca * sg,
        ca * sb * cg + sa * sg,
        cb * sg,
        sa * sb * sg + ca * cg,
        ca * sb * sg - sa * cg,
        -sb,
        sa * cb,
        ca * cb,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerDecomposition {
    pub angles: EulerAngles,
    /// Set when `|q31| ≈ 1`; `alpha` is then fixed to zero.
    pub gimbal_lock: bool,
}

pub fn euler_from_rotation(q: &RotationMatrix) -> EulerDecomposition {
    let m = q.matrix();
    let q31 = m[(2, 0)].clamp(-1.0, 1.0);
    if q31.abs() >= 1.0 - GIMBAL_TOL {
        let beta = if q31 < 0.0 { PI / 2.0 } else { -PI / 2.0 };
        let gamma = (-m[(0, 1)]).atan2(m[(1, 1)]);
        return EulerDecomposition {
            angles: EulerAngles { alpha: 0.0, beta, gamma: wrap_angle(gamma) },
            gimbal_lock: true,
        };
    }
    let beta = (-q31).asin();
    let alpha = m[(2, 1)].atan2(m[(2, 2)]);
    let gamma = m[(1, 0)].atan2(m[(0, 0)]);
    EulerDecomposition {
        angles: EulerAngles {
            alpha: wrap_angle(alpha),
            beta: wrap_angle(beta),
            gamma: wrap_angle(gamma),
        },
        gimbal_lock: false,
    }
}

/// Column `n` of the result is `Q c_n + t`.
pub fn apply_pose(pose: &Pose, c: &Conformation) -> Conformation {
    let mut out = pose.rotation.matrix() * c.matrix();
    for mut col in out.column_iter_mut() {
        col += pose.translation;
    }
    Conformation(out)
}

pub fn is_so3(q: &Matrix3<f64>, tol: f64) -> bool {
    let ortho = (q.transpose() * q - Matrix3::identity()).norm();
    ortho <= tol && (q.determinant() - 1.0).abs() <= tol
}

/// `c ⊗ I₃` (9×3), so that `kron_landmark(c)ᵀ vec(Q) = Q c` under column
/// stacking.
pub fn kron_landmark(c: &Vector3<f64>) -> Mat93 {
    let mut k = Mat93::zeros();
    for i in 0..3 {
        for d in 0..3 {
            k[(3 * i + d, d)] = c[i];
        }
    }
    k
}

/// Column-stacking vectorization.
pub fn vec_mat(q: &Matrix3<f64>) -> Vec9 {
    Vec9::from_column_slice(q.as_slice())
}

pub fn unvec(v: &Vec9) -> Matrix3<f64> {
    Matrix3::from_column_slice(v.as_slice())
}

pub fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}
