//! Dissimilarity functions `g(θ_n | θ_a)` and their information gradients with
//! respect to the target coordinates, the translation and `vec(Q)`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{kron_landmark, Pose, Vec9};

/// Degeneracy thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Minimum distance / projection norm.
    pub geometry: f64,
    /// Minimum `1 - |x|` for the acos argument of angle gradients.
    pub angle: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { geometry: 1e-12, angle: 1e-9 }
    }
}

/// Slack within which an acos argument is clamped instead of rejected.
const ACOS_SLACK: f64 = 1e-12;
const FRAME_TOL: f64 = 1e-12;

/// Orthonormal AoA reference: `normal` (a) defines the projection plane and
/// `reference` (b) the in-plane zero direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoaFrame {
    normal: Vector3<f64>,
    reference: Vector3<f64>,
}

impl AoaFrame {
    pub fn new(normal: Vector3<f64>, reference: Vector3<f64>) -> Result<Self> {
        if (normal.norm() - 1.0).abs() > FRAME_TOL
            || (reference.norm() - 1.0).abs() > FRAME_TOL
            || normal.dot(&reference).abs() > FRAME_TOL
        {
            return Err(Error::InvalidParameter("AoA frame must be orthonormal".into()));
        }
        Ok(Self { normal, reference })
    }

    /// Normalizes both vectors and removes the component of `reference` along
    /// `normal`.
    pub fn orthonormalized(normal: Vector3<f64>, reference: Vector3<f64>) -> Result<Self> {
        let a = normal
            .try_normalize(FRAME_TOL)
            .ok_or_else(|| Error::InvalidParameter("AoA normal is zero".into()))?;
        let b = (reference - a * a.dot(&reference))
            .try_normalize(FRAME_TOL)
            .ok_or_else(|| Error::InvalidParameter("AoA reference is parallel to normal".into()))?;
        Ok(Self { normal: a, reference: b })
    }

    /// `a = e₃`, `b = e₁`: azimuth in the horizontal plane.
    pub fn horizontal() -> Self {
        Self { normal: Vector3::z(), reference: Vector3::x() }
    }

    pub fn normal(&self) -> &Vector3<f64> {
        &self.normal
    }

    pub fn reference(&self) -> &Vector3<f64> {
        &self.reference
    }

    pub fn rotated(&self, r: &nalgebra::Matrix3<f64>) -> Self {
        Self { normal: r * self.normal, reference: r * self.reference }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dissimilarity {
    Distance,
    SquaredDistance,
    Aoa(AoaFrame),
    /// Angle at the anchor between the rays to the target and to the anchor
    /// `third`.
    Adoa { third: usize },
}

impl Dissimilarity {
    pub fn name(&self) -> &'static str {
        match self {
            Dissimilarity::Distance => "distance",
            Dissimilarity::SquaredDistance => "squared_distance",
            Dissimilarity::Aoa(_) => "aoa",
            Dissimilarity::Adoa { .. } => "adoa",
        }
    }

    pub fn is_angle(&self) -> bool {
        matches!(self, Dissimilarity::Aoa(_) | Dissimilarity::Adoa { .. })
    }

    pub fn is_distance(&self) -> bool {
        matches!(self, Dissimilarity::Distance | Dissimilarity::SquaredDistance)
    }

    /// `g(θ_n | θ_a)`; `theta_k` is required for ADoA.
    pub fn eval(
        &self,
        theta_n: &Vector3<f64>,
        theta_a: &Vector3<f64>,
        theta_k: Option<&Vector3<f64>>,
        tol: &Tolerances,
    ) -> Result<f64> {
        let u = theta_n - theta_a;
        let dna = checked_norm(&u, "target-anchor distance", tol)?;
        match self {
            Dissimilarity::Distance => Ok(dna),
            Dissimilarity::SquaredDistance => Ok(u.norm_squared()),
            Dissimilarity::Aoa(frame) => {
                let (x, _) = aoa_cosine(frame, &u, tol)?;
                Ok(x.acos())
            }
            Dissimilarity::Adoa { .. } => {
                let (x, _) = adoa_cosine(&u, theta_n, theta_a, third(theta_k)?, tol)?;
                Ok(x.acos())
            }
        }
    }

    /// `∂g/∂θ_n`.
    pub fn grad_coords(
        &self,
        theta_n: &Vector3<f64>,
        theta_a: &Vector3<f64>,
        theta_k: Option<&Vector3<f64>>,
        tol: &Tolerances,
    ) -> Result<Vector3<f64>> {
        let u = theta_n - theta_a;
        let dna = checked_norm(&u, "target-anchor distance", tol)?;
        match self {
            Dissimilarity::Distance => Ok(u / dna),
            Dissimilarity::SquaredDistance => Ok(2.0 * u),
            Dissimilarity::Aoa(frame) => {
                let (x, w) = aoa_cosine(frame, &u, tol)?;
                acos_gradient(x, &w, tol)
            }
            Dissimilarity::Adoa { .. } => {
                let theta_k = third(theta_k)?;
                let v = theta_n - theta_k;
                if v.cross(&u).norm() <= tol.geometry * dna * v.norm().max(1.0) {
                    return Err(Error::DegenerateGeometry { what: "collinear ADoA triple", value: v.cross(&u).norm() });
                }
                let (x, w) = adoa_cosine(&u, theta_n, theta_a, theta_k, tol)?;
                acos_gradient(x, &w, tol)
            }
        }
    }

    /// `∂g/∂t` at `θ_n = Q c_n + t`.
    pub fn grad_translation(
        &self,
        pose: &Pose,
        c_n: &Vector3<f64>,
        theta_a: &Vector3<f64>,
        theta_k: Option<&Vector3<f64>>,
        tol: &Tolerances,
    ) -> Result<Vector3<f64>> {
        // ∂θ_n/∂t = I
        self.grad_coords(&pose.transform(c_n), theta_a, theta_k, tol)
    }

    /// `∂g/∂vec(Q) = (c_n ⊗ I₃) ∂g/∂t`.
    pub fn grad_rotation(
        &self,
        pose: &Pose,
        c_n: &Vector3<f64>,
        theta_a: &Vector3<f64>,
        theta_k: Option<&Vector3<f64>>,
        tol: &Tolerances,
    ) -> Result<Vec9> {
        let gt = self.grad_translation(pose, c_n, theta_a, theta_k, tol)?;
        Ok(kron_landmark(c_n) * gt)
    }
}

fn third(theta_k: Option<&Vector3<f64>>) -> Result<&Vector3<f64>> {
    theta_k.ok_or_else(|| Error::InvalidParameter("ADoA needs a third node".into()))
}

fn checked_norm(v: &Vector3<f64>, what: &'static str, tol: &Tolerances) -> Result<f64> {
    let n = v.norm();
    if n < tol.geometry {
        return Err(Error::DegenerateGeometry { what, value: n });
    }
    Ok(n)
}

fn clamp_acos_arg(x: f64) -> Result<f64> {
    if !x.is_finite() || x.abs() > 1.0 + ACOS_SLACK {
        return Err(Error::ArgOutOfRange { value: x });
    }
    Ok(x.clamp(-1.0, 1.0))
}

/// `-w / sqrt(1 - x²)`.
fn acos_gradient(x: f64, w: &Vector3<f64>, tol: &Tolerances) -> Result<Vector3<f64>> {
    if x.abs() >= 1.0 - tol.angle {
        return Err(Error::AngleSingularity { x });
    }
    Ok(-w / (1.0 - x * x).sqrt())
}

/// Returns `x = uᵀb / ‖Pu‖` and `w = ∂x/∂u = ((uᵀPu) b - (uᵀb) Pu) / ‖Pu‖³`
/// with `P = I - a aᵀ`.
fn aoa_cosine(frame: &AoaFrame, u: &Vector3<f64>, tol: &Tolerances) -> Result<(f64, Vector3<f64>)> {
    let a = frame.normal();
    let b = frame.reference();
    let pu = u - a * a.dot(u);
    let npu = pu.norm();
    if npu < tol.geometry {
        return Err(Error::DegenerateGeometry { what: "AoA in-plane projection", value: npu });
    }
    let ub = u.dot(b);
    let x = clamp_acos_arg(ub / npu)?;
    let w = (b * pu.norm_squared() - pu * ub) / (npu * npu * npu);
    Ok((x, w))
}

/// Law-of-cosines argument at the anchor and its derivative in `θ_n`.
///
/// With `u = θ_n - θ_a`, `v = θ_n - θ_k`, `d = ‖θ_k - θ_a‖`:
/// `x = (uᵀu + d² - vᵀv) / (2‖u‖d)` and
/// `w = u/(2‖u‖d) - u d/(2‖u‖³) + ‖v‖² u/(2‖u‖³d) - v/(‖u‖d)`.
fn adoa_cosine(
    u: &Vector3<f64>,
    theta_n: &Vector3<f64>,
    theta_a: &Vector3<f64>,
    theta_k: &Vector3<f64>,
    tol: &Tolerances,
) -> Result<(f64, Vector3<f64>)> {
    let v = theta_n - theta_k;
    let nu = u.norm();
    checked_norm(&v, "target-third distance", tol)?;
    let d = checked_norm(&(theta_k - theta_a), "anchor-third distance", tol)?;
    let vv = v.norm_squared();
    let x = clamp_acos_arg((nu * nu + d * d - vv) / (2.0 * nu * d))?;
    let nu3 = nu * nu * nu;
    let w = u / (2.0 * nu * d) - u * d / (2.0 * nu3) + u * vv / (2.0 * nu3 * d) - v / (nu * d);
    Ok((x, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rotation_from_euler, vec_mat, EulerAngles, RotationMatrix};
    use approx::assert_relative_eq;
    use nalgebra::Matrix3;
    use std::f64::consts::PI;

    const TOL: Tolerances = Tolerances { geometry: 1e-12, angle: 1e-9 };

    fn fd_coords(kind: &Dissimilarity, n: &Vector3<f64>, a: &Vector3<f64>, k: Option<&Vector3<f64>>) -> Vector3<f64> {
        let h = 1e-6;
        Vector3::from_fn(|i, _| {
            let mut p = *n;
            let mut m = *n;
            p[i] += h;
            m[i] -= h;
            (kind.eval(&p, a, k, &TOL).unwrap() - kind.eval(&m, a, k, &TOL).unwrap()) / (2.0 * h)
        })
    }

    #[test]
    fn distance_values_and_gradients() {
        let a = Vector3::new(1.0, 2.0, 3.0);
        let n = a + Vector3::new(3.0, 0.0, 0.0);
        assert_eq!(Dissimilarity::Distance.eval(&n, &a, None, &TOL).unwrap(), 3.0);
        assert_eq!(Dissimilarity::Distance.grad_coords(&n, &a, None, &TOL).unwrap(), Vector3::x());
        assert_eq!(
            Dissimilarity::SquaredDistance.grad_coords(&n, &a, None, &TOL).unwrap(),
            Vector3::new(6.0, 0.0, 0.0)
        );
    }

    #[test]
    fn coincident_points_are_degenerate() {
        let a = Vector3::new(1.0, 2.0, 3.0);
        let err = Dissimilarity::Distance.eval(&a, &a, None, &TOL).unwrap_err();
        assert!(matches!(err, Error::DegenerateGeometry { .. }));
    }

    #[test]
    fn aoa_reference_cases() {
        let kind = Dissimilarity::Aoa(AoaFrame::horizontal());
        let a = Vector3::zeros();
        assert_eq!(kind.eval(&Vector3::new(2.0, 0.0, 0.0), &a, None, &TOL).unwrap(), 0.0);
        assert_relative_eq!(kind.eval(&Vector3::new(0.0, 2.0, 0.0), &a, None, &TOL).unwrap(), PI / 2.0);
        // Elevation does not change the azimuth.
        assert_relative_eq!(kind.eval(&Vector3::new(0.0, 2.0, 5.0), &a, None, &TOL).unwrap(), PI / 2.0);
        // Straight up along the normal has no in-plane component.
        let err = kind.eval(&Vector3::new(0.0, 0.0, 1.0), &a, None, &TOL).unwrap_err();
        assert!(matches!(err, Error::DegenerateGeometry { .. }));
        // Gradient blows up on the reference direction.
        let err = kind.grad_coords(&Vector3::new(2.0, 0.0, 0.0), &a, None, &TOL).unwrap_err();
        assert!(matches!(err, Error::AngleSingularity { .. }));
    }

    #[test]
    fn adoa_equilateral() {
        let kind = Dissimilarity::Adoa { third: 1 };
        let a = Vector3::zeros();
        let k = Vector3::new(1.0, 0.0, 0.0);
        let n = Vector3::new(0.5, 3f64.sqrt() / 2.0, 0.0);
        assert_relative_eq!(kind.eval(&n, &a, Some(&k), &TOL).unwrap(), PI / 3.0, epsilon = 1e-15);
        assert!(kind.eval(&n, &a, None, &TOL).is_err());
        let collinear = Vector3::new(3.0, 0.0, 0.0);
        assert!(kind.grad_coords(&collinear, &a, Some(&k), &TOL).is_err());
    }

    #[test]
    fn adoa_matches_direct_angle() {
        let a = Vector3::new(0.3, -1.0, 2.0);
        let k = Vector3::new(4.0, 1.0, -2.0);
        let n = Vector3::new(-2.0, 5.0, 1.0);
        let kind = Dissimilarity::Adoa { third: 0 };
        let got = kind.eval(&n, &a, Some(&k), &TOL).unwrap();
        let (dan, dak) = (n - a, k - a);
        let direct = (dan.dot(&dak) / (dan.norm() * dak.norm())).acos();
        assert_relative_eq!(got, direct, epsilon = 1e-9);
    }

    #[test]
    fn adoa_gradient_matches_fd() {
        let a = Vector3::new(0.3, -1.0, 2.0);
        let k = Vector3::new(4.0, 1.0, -2.0);
        let n = Vector3::new(-2.0, 5.0, 1.0);
        let kind = Dissimilarity::Adoa { third: 0 };
        let g = kind.grad_coords(&n, &a, Some(&k), &TOL).unwrap();
        let fd = fd_coords(&kind, &n, &a, Some(&k));
        assert_relative_eq!(g, fd, max_relative = 1e-6);
    }

    #[test]
    fn aoa_gradient_matches_fd() {
        let frame = AoaFrame::orthonormalized(Vector3::new(0.2, -0.4, 1.0), Vector3::new(1.0, 0.5, 0.0)).unwrap();
        let kind = Dissimilarity::Aoa(frame);
        let a = Vector3::new(1.0, -2.0, 0.5);
        let n = Vector3::new(-3.0, 4.0, 2.0);
        let g = kind.grad_coords(&n, &a, None, &TOL).unwrap();
        assert_relative_eq!(g, fd_coords(&kind, &n, &a, None), max_relative = 1e-6);
    }

    #[test]
    fn translation_and_rotation_gradients_at_identity() {
        let pose = crate::geometry::Pose::identity();
        let c = Vector3::x();
        let a = Vector3::zeros();
        let gt = Dissimilarity::SquaredDistance.grad_translation(&pose, &c, &a, None, &TOL).unwrap();
        assert_eq!(gt, Vector3::new(2.0, 0.0, 0.0));
        let gq = Dissimilarity::SquaredDistance.grad_rotation(&pose, &c, &a, None, &TOL).unwrap();
        let mut want = Vec9::zeros();
        want[0] = 2.0;
        assert_eq!(gq, want);
        assert_eq!(
            Dissimilarity::Distance.grad_translation(&pose, &c, &a, None, &TOL).unwrap(),
            Vector3::x()
        );
    }

    #[test]
    fn rotation_gradient_matches_unconstrained_fd() {
        let q = rotation_from_euler(EulerAngles::from_degrees(10.0, 20.0, 45.0).unwrap());
        let pose = Pose::new(q, Vector3::new(-3.0, 0.5, 7.0));
        let c = Vector3::new(0.5, -0.5, 0.5);
        let anchor = Vector3::new(10.0, -10.0, -10.0);
        let third = Vector3::new(-10.0, 10.0, 10.0);
        let kinds = [
            Dissimilarity::Distance,
            Dissimilarity::SquaredDistance,
            Dissimilarity::Aoa(AoaFrame::horizontal()),
            Dissimilarity::Adoa { third: 0 },
        ];
        for kind in kinds {
            let g = kind.grad_rotation(&pose, &c, &anchor, Some(&third), &TOL).unwrap();
            let base = vec_mat(q.matrix());
            let h = 1e-6;
            let fd = Vec9::from_fn(|j, _| {
                let eval = |s: f64| {
                    let mut v = base;
                    v[j] += s;
                    let m: Matrix3<f64> = crate::geometry::unvec(&v);
                    kind.eval(&(m * c + pose.translation), &anchor, Some(&third), &TOL).unwrap()
                };
                (eval(h) - eval(-h)) / (2.0 * h)
            });
            assert!((g - fd).norm() <= 1e-6 * fd.norm(), "{}: {g} vs {fd}", kind.name());
            let gt = kind.grad_translation(&pose, &c, &anchor, Some(&third), &TOL).unwrap();
            assert_eq!(g, kron_landmark(&c) * gt);
        }
        let _ = RotationMatrix::identity();
    }

    #[test]
    fn aoa_scale_invariance() {
        let kind = Dissimilarity::Aoa(AoaFrame::horizontal());
        let a = Vector3::zeros();
        let n = Vector3::new(1.0, 2.0, 0.5);
        let g1 = kind.eval(&n, &a, None, &TOL).unwrap();
        let g3 = kind.eval(&(n * 3.0), &a, None, &TOL).unwrap();
        assert_relative_eq!(g1, g3, epsilon = 1e-14);
        let n1 = kind.grad_coords(&n, &a, None, &TOL).unwrap().norm();
        let n3 = kind.grad_coords(&(n * 3.0), &a, None, &TOL).unwrap().norm();
        assert_relative_eq!(n1 / n3, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn frame_validation() {
        assert!(AoaFrame::new(Vector3::z(), Vector3::x()).is_ok());
        assert!(AoaFrame::new(Vector3::z(), Vector3::new(1.0, 0.0, 0.1)).is_err());
        assert!(AoaFrame::orthonormalized(Vector3::z(), Vector3::z()).is_err());
    }
}
