//! CRLB evaluation: exact trace bounds, the inversion-free trace
//! approximation and the bound constrained to SO(3).
//!
//! By the AM–HM inequality `η / tr(F) ≤ tr(F⁻¹) / η`, so the approximation
//! is a lower estimate of the exact average bound, tight when all
//! eigenvalues coincide.

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fim::{fim_rotation, fim_translation};
use crate::geometry::{is_so3, Mat9, Mat93, SO3_TOL};
use crate::scenario::Scenario;

/// Inversions are refused above this condition number.
pub const MAX_CONDITION: f64 = 1e12;
/// Eigenvalues below `RANK_TOL · λ_max` count as zero.
pub const RANK_TOL: f64 = 1e-12;

pub type Vec6 = SVector<f64, 6>;
pub type Mat69 = SMatrix<f64, 6, 9>;

struct Spectrum {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
}

impl Spectrum {
    fn of(f: &DMatrix<f64>) -> Self {
        let sym = (f + f.transpose()) * 0.5;
        let e = SymmetricEigen::new(sym);
        Self { values: e.eigenvalues, vectors: e.eigenvectors }
    }

    fn max(&self) -> f64 {
        self.values.max()
    }

    fn condition(&self) -> f64 {
        let (lo, hi) = (self.values.min(), self.values.max());
        if lo <= 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    fn observable(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        let cut = RANK_TOL * self.max().max(0.0);
        self.values.iter().copied().enumerate().filter(move |(_, v)| *v > cut)
    }

    fn rank(&self) -> usize {
        self.observable().count()
    }

    fn null_space(&self) -> Vec<Vec<f64>> {
        let cut = RANK_TOL * self.max().max(0.0);
        let mut idx: Vec<usize> = (0..self.values.len()).filter(|&i| self.values[i] <= cut).collect();
        if idx.is_empty() {
            // ill-conditioned but numerically full rank: report the weakest direction
            idx.push(self.values.imin());
        }
        idx.into_iter().map(|i| self.vectors.column(i).iter().copied().collect()).collect()
    }

    fn singular(&self) -> Error {
        Error::SingularFim { condition: self.condition(), null_space: self.null_space() }
    }
}

fn check_dim(f: &DMatrix<f64>, dim: usize) -> Result<()> {
    if f.nrows() != dim || f.ncols() != dim {
        return Err(Error::InvalidParameter(format!(
            "expected a {dim}x{dim} Fisher matrix, got {}x{}",
            f.nrows(),
            f.ncols()
        )));
    }
    Ok(())
}

/// Condition number `λ_max / λ_min` of a symmetric matrix (∞ if singular).
pub fn condition_number(f: &DMatrix<f64>) -> f64 {
    Spectrum::of(f).condition()
}

/// `tr(F_t⁻¹) / 3`.
pub fn crlb_translation(f: &DMatrix<f64>) -> Result<f64> {
    check_dim(f, 3)?;
    let s = Spectrum::of(f);
    if s.condition() >= MAX_CONDITION {
        return Err(s.singular());
    }
    Ok(s.values.iter().map(|v| 1.0 / v).sum::<f64>() / 3.0)
}

/// `3 / tr(F_t)`.
pub fn crlb_translation_approx(f: &DMatrix<f64>) -> Result<f64> {
    check_dim(f, 3)?;
    trace_approx(f)
}

fn trace_approx(f: &DMatrix<f64>) -> Result<f64> {
    let tr = f.trace();
    if tr <= 0.0 {
        return Err(Error::ZeroTrace);
    }
    Ok(f.nrows() as f64 / tr)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationCrlb {
    /// `tr(F_Q⁻¹) / 9`, or the pseudo-inverse trace on the observable
    /// subspace when `pseudo_inverse` is set.
    pub value: f64,
    pub rank: usize,
    pub pseudo_inverse: bool,
    pub condition: f64,
}

/// `tr(F_Q⁻¹) / 9`, falling back to a pseudo-inverse for `3 ≤ rank < 9`.
pub fn crlb_rotation(f: &DMatrix<f64>) -> Result<RotationCrlb> {
    check_dim(f, 9)?;
    if f.trace() <= 0.0 {
        return Err(Error::ZeroTrace);
    }
    let s = Spectrum::of(f);
    let rank = s.rank();
    let condition = s.condition();
    if rank < 3 {
        return Err(s.singular());
    }
    let pseudo_inverse = rank < 9 || condition >= MAX_CONDITION;
    let value = s.observable().map(|(_, v)| 1.0 / v).sum::<f64>() / 9.0;
    Ok(RotationCrlb { value, rank, pseudo_inverse, condition })
}

/// `9 / tr(F_Q)`.
pub fn crlb_rotation_approx(f: &DMatrix<f64>) -> Result<f64> {
    check_dim(f, 9)?;
    trace_approx(f)
}

fn columns(q: &Matrix3<f64>) -> [nalgebra::Vector3<f64>; 3] {
    [q.column(0).into_owned(), q.column(1).into_owned(), q.column(2).into_owned()]
}

/// `h(Q) = [‖q₁‖²−1, q₂ᵀq₁, q₃ᵀq₁, ‖q₂‖²−1, q₂ᵀq₃, ‖q₃‖²−1]`; zero iff the
/// columns are orthonormal.
pub fn constraint_vector(q: &Matrix3<f64>) -> Vec6 {
    let [q1, q2, q3] = columns(q);
    Vec6::new(
        q1.norm_squared() - 1.0,
        q2.dot(&q1),
        q3.dot(&q1),
        q2.norm_squared() - 1.0,
        q2.dot(&q3),
        q3.norm_squared() - 1.0,
    )
}

/// `G(Q) = ∂h / ∂vec(Q)` (6×9).
pub fn constraint_jacobian(q: &Matrix3<f64>) -> Mat69 {
    let [q1, q2, q3] = columns(q);
    let mut g = Mat69::zeros();
    let mut put = |row: usize, block: usize, v: nalgebra::Vector3<f64>| {
        for d in 0..3 {
            g[(row, 3 * block + d)] += v[d];
        }
    };
    put(0, 0, 2.0 * q1);
    put(1, 0, q2);
    put(1, 1, q1);
    put(2, 0, q3);
    put(2, 2, q1);
    put(3, 1, 2.0 * q2);
    put(4, 1, q3);
    put(4, 2, q2);
    put(5, 2, 2.0 * q3);
    g
}

/// `M = [−q₃ 0 q₂; 0 −q₃ −q₁; q₁ q₂ 0]` (9×3), spanning the tangent space of
/// SO(3) at `Q` in `vec(Q)` coordinates.
pub fn constraint_matrix(q: &Matrix3<f64>) -> Result<Mat93> {
    if !is_so3(q, SO3_TOL) {
        return Err(Error::NotRotation);
    }
    let [q1, q2, q3] = columns(q);
    let mut m = Mat93::zeros();
    let blocks = [[-q3, q3 * 0.0, q2], [q1 * 0.0, -q3, -q1], [q1, q2, q1 * 0.0]];
    for (bi, row) in blocks.iter().enumerate() {
        for (col, v) in row.iter().enumerate() {
            m.fixed_view_mut::<3, 1>(3 * bi, col).copy_from(v);
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedCrlb {
    /// `M (Mᵀ F_Q M)⁻¹ Mᵀ`.
    pub matrix: Mat9,
    /// `tr(matrix) / 9`.
    pub average: f64,
    /// Condition number of `Mᵀ F_Q M`.
    pub condition: f64,
}

pub fn constrained_crlb_rotation(f: &DMatrix<f64>, q: &Matrix3<f64>) -> Result<ConstrainedCrlb> {
    check_dim(f, 9)?;
    let m = constraint_matrix(q)?;
    let f9 = Mat9::from_iterator(f.iter().copied());
    let projected = m.transpose() * f9 * m;
    let projected = (projected + projected.transpose()) * 0.5;
    let eig = SymmetricEigen::new(projected);
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if hi <= 0.0 || lo <= RANK_TOL * hi {
        return Err(Error::SingularProjectedFim);
    }
    let inv = eig.eigenvectors
        * Matrix3::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v))
        * eig.eigenvectors.transpose();
    let matrix = m * inv * m.transpose();
    Ok(ConstrainedCrlb { average: matrix.trace() / 9.0, matrix, condition: hi / lo })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundFlags {
    /// `crlb_q` used a pseudo-inverse.
    pub pseudo_inverse: bool,
    /// Rank of `F_Q` (9 when full).
    pub rank_fq: usize,
}

impl BoundFlags {
    pub fn describe(&self) -> String {
        let mut out = Vec::new();
        if self.pseudo_inverse {
            out.push("pinv".to_string());
        }
        if self.rank_fq < 9 {
            out.push(format!("rank_fq={}", self.rank_fq));
        }
        out.join("|")
    }
}

/// Every bound for one scenario. The constrained average divides by 9 to
/// stay comparable with `crlb_q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub crlb_t: f64,
    pub crlb_t_approx: f64,
    pub crlb_q: f64,
    pub crlb_q_approx: f64,
    pub ccrb_q: f64,
    pub cond_ft: f64,
    pub cond_fq: f64,
    pub cond_projected: f64,
    pub flags: BoundFlags,
}

pub fn bound_report(scenario: &Scenario, exec: Exec) -> Result<BoundReport> {
    let ft = fim_translation(scenario, exec)?;
    let fq = fim_rotation(scenario, exec)?;
    let rot = crlb_rotation(&fq.matrix)?;
    let ccrb = constrained_crlb_rotation(&fq.matrix, scenario.pose().rotation.matrix())?;
    Ok(BoundReport {
        crlb_t: crlb_translation(&ft.matrix)?,
        crlb_t_approx: crlb_translation_approx(&ft.matrix)?,
        crlb_q: rot.value,
        crlb_q_approx: crlb_rotation_approx(&fq.matrix)?,
        ccrb_q: ccrb.average,
        cond_ft: condition_number(&ft.matrix),
        cond_fq: rot.condition,
        cond_projected: ccrb.condition,
        flags: BoundFlags { pseudo_inverse: rot.pseudo_inverse, rank_fq: rot.rank },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rotation_from_euler, vec_mat, EulerAngles, RotationMatrix};
    use crate::intensity::NoiseModel;
    use crate::scenario::{table3, EdgeClass};
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    fn table3_q() -> Matrix3<f64> {
        *rotation_from_euler(EulerAngles::from_degrees(10.0, 20.0, 45.0).unwrap()).matrix()
    }

    #[test]
    fn translation_bounds() {
        assert_relative_eq!(crlb_translation(&DMatrix::identity(3, 3)).unwrap(), 1.0);
        assert_relative_eq!(crlb_translation(&diag(&[4.0, 4.0, 4.0])).unwrap(), 0.25);
        assert_relative_eq!(crlb_translation_approx(&DMatrix::identity(3, 3)).unwrap(), 1.0);
        let f = diag(&[1.0, 1.0, 100.0]);
        assert_relative_eq!(crlb_translation_approx(&f).unwrap(), 3.0 / 102.0);
        assert_relative_eq!(crlb_translation(&f).unwrap(), 2.01 / 3.0);
        assert_eq!(crlb_translation_approx(&DMatrix::zeros(3, 3)), Err(Error::ZeroTrace));
    }

    #[test]
    fn singular_translation_reports_null_space() {
        match crlb_translation(&diag(&[1.0, 1.0, 0.0])).unwrap_err() {
            Error::SingularFim { null_space, .. } => {
                assert_eq!(null_space.len(), 1);
                assert_relative_eq!(null_space[0][2].abs(), 1.0);
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn rotation_bounds() {
        let r = crlb_rotation(&DMatrix::identity(9, 9)).unwrap();
        assert_relative_eq!(r.value, 1.0);
        assert!(!r.pseudo_inverse);
        assert_relative_eq!(crlb_rotation_approx(&DMatrix::identity(9, 9)).unwrap(), 1.0);
        assert_relative_eq!(crlb_rotation(&(DMatrix::identity(9, 9) * 2.0)).unwrap().value, 0.5);

        let mut d = vec![1.0; 9];
        d[7] = 0.0;
        d[8] = 0.0;
        let r = crlb_rotation(&diag(&d)).unwrap();
        assert!(r.pseudo_inverse);
        assert_eq!(r.rank, 7);
        assert_relative_eq!(r.value, 7.0 / 9.0);

        let mut d = vec![0.0; 9];
        d[0] = 1.0;
        d[1] = 1.0;
        assert!(matches!(crlb_rotation(&diag(&d)), Err(Error::SingularFim { .. })));
        assert_eq!(crlb_rotation(&DMatrix::zeros(9, 9)).unwrap_err(), Error::ZeroTrace);
    }

    #[test]
    fn constraint_vector_cases() {
        assert_eq!(constraint_vector(&Matrix3::identity()), Vec6::zeros());
        assert_eq!(constraint_vector(&(Matrix3::identity() * 2.0)), Vec6::new(3.0, 0.0, 0.0, 3.0, 0.0, 3.0));
        assert!(constraint_vector(&table3_q()).amax() < 1e-12);
    }

    #[test]
    fn constraint_matrix_at_identity() {
        let m = constraint_matrix(&Matrix3::identity()).unwrap();
        let e = |i: usize| Vector3::ith(i, 1.0);
        let want_cols = [
            [-e(2), Vector3::zeros(), e(0)],
            [Vector3::zeros(), -e(2), e(1)],
            [e(1), -e(0), Vector3::zeros()],
        ];
        for (col, blocks) in want_cols.iter().enumerate() {
            for (b, v) in blocks.iter().enumerate() {
                assert_eq!(m.fixed_view::<3, 1>(3 * b, col).into_owned(), *v);
            }
        }
        assert_eq!(constraint_matrix(&(Matrix3::identity() * 2.0)).unwrap_err(), Error::NotRotation);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let q = table3_q() * 1.1;
        let g = constraint_jacobian(&q);
        let h = 1e-3;
        let v = vec_mat(&q);
        for j in 0..9 {
            let mut p = v;
            let mut m = v;
            p[j] += h;
            m[j] -= h;
            let col = (constraint_vector(&crate::geometry::unvec(&p)) - constraint_vector(&crate::geometry::unvec(&m)))
                / (2.0 * h);
            assert!((col - g.column(j)).amax() < 1e-12);
        }
    }

    #[test]
    fn ccrb_identity_fisher() {
        let c = constrained_crlb_rotation(&DMatrix::identity(9, 9), &Matrix3::identity()).unwrap();
        let m = constraint_matrix(&Matrix3::identity()).unwrap();
        assert_relative_eq!(c.matrix, m * m.transpose() * 0.5, epsilon = 1e-15);
        assert_relative_eq!(c.matrix.trace(), 3.0, epsilon = 1e-14);
        assert_relative_eq!(c.average, 1.0 / 3.0, epsilon = 1e-15);
        let c4 = constrained_crlb_rotation(&(DMatrix::identity(9, 9) * 4.0), &table3_q()).unwrap();
        assert_relative_eq!(c4.average, 1.0 / 12.0, epsilon = 1e-15);
        assert_eq!(
            constrained_crlb_rotation(&DMatrix::zeros(9, 9), &Matrix3::identity()).unwrap_err(),
            Error::SingularProjectedFim
        );
    }

    #[test]
    fn table3_report_orderings() {
        let s = table3(EdgeClass::Distance, NoiseModel::Normal { sigma: 0.1 });
        let r = bound_report(&s, Exec::Sequential).unwrap();
        assert!(r.crlb_t > 0.0);
        assert!(r.ccrb_q < r.crlb_q);
        assert!(r.crlb_t_approx <= r.crlb_t);
        assert!(r.crlb_q_approx <= r.crlb_q);
        assert_eq!(r.flags.rank_fq, 9);
        let s2 = table3(EdgeClass::Distance, NoiseModel::Normal { sigma: 0.2 });
        let r2 = bound_report(&s2, Exec::Sequential).unwrap();
        assert_relative_eq!(r2.crlb_t / r.crlb_t, 4.0, max_relative = 1e-12);
    }

    fn random_spd(eigs: &[f64], w: [f64; 3]) -> DMatrix<f64> {
        // Orthogonal basis from a rotation, extended block-diagonally.
        let r = RotationMatrix::exp(&Vector3::from(w));
        let n = eigs.len();
        let mut basis = DMatrix::identity(n, n);
        for b in 0..n / 3 {
            basis.view_mut((3 * b, 3 * b), (3, 3)).copy_from(r.matrix());
        }
        &basis * diag(eigs) * basis.transpose()
    }

    proptest! {
        #[test]
        fn scaling(eigs in prop::collection::vec(0.1f64..10.0, 9), w in prop::array::uniform3(-2.0f64..2.0), c in 0.1f64..100.0) {
            let f = random_spd(&eigs, w);
            let fc = &f * c;
            let a = crlb_rotation(&f).unwrap().value;
            prop_assert!((crlb_rotation(&fc).unwrap().value - a / c).abs() <= 1e-10 * a / c);
            let b = crlb_rotation_approx(&f).unwrap();
            prop_assert!((crlb_rotation_approx(&fc).unwrap() - b / c).abs() <= 1e-12 * b / c);
            let t = f.view((0, 0), (3, 3)).into_owned();
            let ct = crlb_translation(&t).unwrap();
            prop_assert!((crlb_translation(&(&t * c)).unwrap() - ct / c).abs() <= 1e-10 * ct / c);
        }

        #[test]
        fn approx_below_exact(eigs in prop::collection::vec(0.01f64..100.0, 9), w in prop::array::uniform3(-3.0f64..3.0)) {
            let f = random_spd(&eigs, w);
            let exact = crlb_rotation(&f).unwrap().value;
            prop_assert!(crlb_rotation_approx(&f).unwrap() <= exact * (1.0 + 1e-12));
        }

        #[test]
        fn ccrb_below_unconstrained(
            eigs in prop::collection::vec(0.1f64..10.0, 9),
            w in prop::array::uniform3(-3.0f64..3.0),
            angles in prop::array::uniform3(-3.0f64..3.0),
        ) {
            let f = random_spd(&eigs, w);
            let q = rotation_from_euler(EulerAngles::new(angles[0], angles[1], angles[2]).unwrap());
            let c = constrained_crlb_rotation(&f, q.matrix()).unwrap();
            prop_assert!(c.average <= crlb_rotation(&f).unwrap().value);
        }

        #[test]
        fn m_spans_constraint_null_space(angles in prop::array::uniform3(-3.0f64..3.0)) {
            let q = *rotation_from_euler(EulerAngles::new(angles[0], angles[1], angles[2]).unwrap()).matrix();
            let m = constraint_matrix(&q).unwrap();
            prop_assert!((constraint_jacobian(&q) * m).norm() <= 1e-10);
            prop_assert!((m.transpose() * m - Matrix3::identity() * 2.0).amax() <= 1e-12);
        }
    }
}
