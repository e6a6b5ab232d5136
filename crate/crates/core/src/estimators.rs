//! Reference estimators and the Monte Carlo harness that compares their
//! empirical MSE with the bounds.
//!
//! Errors are normalized per coordinate so they sit on the same scale as the
//! average bounds: `mse_t = E‖t̂ − t‖² / 3` and `mse_q = E‖Q̂ − Q‖²_F / 9`.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3xX, SymmetricEigen, Vector3, Vector6};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::bounds::{bound_report, BoundReport};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::{apply_pose, vec_mat, Conformation, Pose, RotationMatrix};
use crate::intensity::{fisher_information, sample, stream_rng, wrap_pi};
use crate::scenario::Scenario;
use crate::stats::mean_se;

/// Relative singular-value threshold for rank decisions on point sets.
const RANK_REL_TOL: f64 = 1e-9;

/// Draws one measurement per edge at the true geometry.
pub fn simulate_measurements<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Result<Vec<f64>> {
    let truth = scenario.true_dissimilarities()?;
    scenario
        .edges()
        .iter()
        .zip(truth)
        .enumerate()
        .map(|(i, (e, g))| sample(&e.noise, g, rng).map_err(|err| err.at_edge(i)))
        .collect()
}

fn singular_values_centered(points: &Matrix3xX<f64>) -> Vector3<f64> {
    let c = centered(points);
    let mut s = (&c * c.transpose()).symmetric_eigenvalues().map(|v| v.max(0.0).sqrt());
    s.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    s
}

fn centered(points: &Matrix3xX<f64>) -> Matrix3xX<f64> {
    let mean = mean_column(points);
    let mut c = points.clone();
    for mut col in c.column_iter_mut() {
        col -= mean;
    }
    c
}

fn mean_column(points: &Matrix3xX<f64>) -> Vector3<f64> {
    points.column_sum() / points.ncols() as f64
}

fn check_anchor_span(anchors: &Conformation) -> Result<()> {
    if anchors.len() < 4 {
        return Err(Error::RankDeficient(format!("{} anchors, need at least 4", anchors.len())));
    }
    let s = singular_values_centered(anchors.matrix());
    if s[2] <= RANK_REL_TOL * s[0] {
        return Err(Error::RankDeficient("anchors are coplanar".into()));
    }
    Ok(())
}

/// Orthogonal (det ±1) alignment `dst ≈ R src + t` without scale.
fn align_o3(src: &Matrix3xX<f64>, dst: &Matrix3xX<f64>) -> (Matrix3<f64>, Vector3<f64>) {
    let m = centered(dst) * centered(src).transpose();
    let svd = m.svd(true, true);
    let r = svd.u.expect("u") * svd.v_t.expect("v_t");
    (r, mean_column(dst) - r * mean_column(src))
}

/// Target coordinates from an `N × N` distance matrix over the targets
/// (first `n_T` rows) followed by the anchors, expressed in the anchor frame.
///
/// With a complete target–target block this is classical MDS followed by an
/// orthogonal alignment of the embedded anchors onto `anchors`. If any
/// target–target entry is NaN, each target is instead located from its anchor
/// distances alone by linear multilateration.
pub fn mds_positions(distances: &DMatrix<f64>, anchors: &Conformation) -> Result<Matrix3xX<f64>> {
    let n = distances.nrows();
    let n_a = anchors.len();
    if distances.ncols() != n || n <= n_a {
        return Err(Error::InvalidParameter(format!(
            "distance matrix is {}x{} for {n_a} anchors",
            distances.nrows(),
            distances.ncols()
        )));
    }
    check_anchor_span(anchors)?;
    let n_t = n - n_a;
    for i in 0..n {
        for j in n_t.min(i)..n {
            if j >= n_t && !distances[(i, j)].is_finite() {
                return Err(Error::Validation(format!("distance ({i}, {j}) to an anchor is missing")));
            }
        }
    }
    let complete = (0..n_t).all(|i| (0..n_t).all(|j| distances[(i, j)].is_finite()));
    if complete {
        classical_mds(distances, anchors, n_t)
    } else {
        multilaterate(distances, anchors, n_t)
    }
}

fn classical_mds(distances: &DMatrix<f64>, anchors: &Conformation, n_t: usize) -> Result<Matrix3xX<f64>> {
    let n = distances.nrows();
    let d2 = distances.map(|d| d * d);
    let d2 = (&d2 + d2.transpose()) * 0.5;
    let row_mean = DVector::from_fn(n, |i, _| d2.row(i).mean());
    let total = d2.mean();
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (d2[(i, j)] - row_mean[i] - row_mean[j] + total));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut x = Matrix3xX::zeros(n);
    for (k, &idx) in order.iter().take(3).enumerate() {
        let s = eig.eigenvalues[idx].max(0.0).sqrt();
        for i in 0..n {
            x[(k, i)] = s * eig.eigenvectors[(i, idx)];
        }
    }
    let embedded_anchors = x.columns(n_t, n - n_t).into_owned();
    let (r, t) = align_o3(&embedded_anchors, anchors.matrix());
    let mut out = r * x.columns(0, n_t);
    for mut col in out.column_iter_mut() {
        col += t;
    }
    Ok(out)
}

fn multilaterate(distances: &DMatrix<f64>, anchors: &Conformation, n_t: usize) -> Result<Matrix3xX<f64>> {
    let n_a = anchors.len();
    let a = anchors.matrix();
    let mean_a = mean_column(a);
    let sq: Vec<f64> = anchors.columns().map(|c| c.norm_squared()).collect();
    let mean_sq = sq.iter().sum::<f64>() / n_a as f64;
    // 2 (a_i − ā)ᵀ x = (|a_i|² − mean |a|²) − (d_i² − mean d²)
    let lhs = DMatrix::from_fn(n_a, 3, |i, k| 2.0 * (a[(k, i)] - mean_a[k]));
    let svd = lhs.svd(true, true);
    let mut out = Matrix3xX::zeros(n_t);
    for t in 0..n_t {
        let d2: Vec<f64> = (0..n_a).map(|i| distances[(t, n_t + i)].powi(2)).collect();
        let mean_d2 = d2.iter().sum::<f64>() / n_a as f64;
        let rhs = DVector::from_fn(n_a, |i, _| (sq[i] - mean_sq) - (d2[i] - mean_d2));
        let x = svd
            .solve(&rhs, RANK_REL_TOL)
            .map_err(|e| Error::RankDeficient(e.to_string()))?;
        out.column_mut(t).copy_from(&x);
    }
    Ok(out)
}

/// Best rigid fit `θ̂ ≈ Q c + t` over rotations (Kabsch with sign correction).
pub fn procrustes_fit(estimated: &Matrix3xX<f64>, body: &Conformation) -> Result<Pose> {
    check_sizes(estimated, body)?;
    if body.len() < 3 {
        return Err(Error::DegenerateConformation);
    }
    let s = singular_values_centered(body.matrix());
    if s[1] <= RANK_REL_TOL * s[0] {
        return Err(Error::DegenerateConformation);
    }
    let m = centered(estimated) * centered(body.matrix()).transpose();
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let d = (u * v_t).determinant().signum();
    let q = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t;
    let t = mean_column(estimated) - q * body.centroid();
    Ok(Pose::new(RotationMatrix::new(q)?, t))
}

/// Least-squares affine fit `θ̂ ≈ A c + t` with no orthogonality constraint.
pub fn unconstrained_ls_fit(estimated: &Matrix3xX<f64>, body: &Conformation) -> Result<(Matrix3<f64>, Vector3<f64>)> {
    check_sizes(estimated, body)?;
    if body.len() < 4 {
        return Err(Error::RankDeficient(format!("{} landmarks, need at least 4", body.len())));
    }
    let s = singular_values_centered(body.matrix());
    if s[2] <= RANK_REL_TOL * s[0] {
        return Err(Error::RankDeficient("centered conformation has rank < 3".into()));
    }
    let cc = centered(body.matrix());
    let gram = &cc * cc.transpose();
    let gram_inv = gram
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient("singular conformation Gram matrix".into()))?;
    let a = centered(estimated) * cc.transpose() * gram_inv;
    let t = mean_column(estimated) - a * body.centroid();
    Ok((a, t))
}

fn check_sizes(estimated: &Matrix3xX<f64>, body: &Conformation) -> Result<()> {
    if estimated.ncols() != body.len() {
        return Err(Error::InvalidParameter(format!(
            "{} estimated positions for {} landmarks",
            estimated.ncols(),
            body.len()
        )));
    }
    Ok(())
}

pub const NLLS_MAX_ITER: usize = 100;

/// Weighted nonlinear least squares on the measurements, parameterized as
/// `(t + δt, exp([δω]×) Q)` and solved by Levenberg–Marquardt. Residuals are
/// weighted by each edge's Fisher information; angle residuals are wrapped.
pub fn nlls_fit(scenario: &Scenario, measurements: &[f64], init: Pose) -> Result<Pose> {
    let edges = scenario.edges();
    if measurements.len() != edges.len() {
        return Err(Error::InvalidParameter(format!(
            "{} measurements for {} edges",
            measurements.len(),
            edges.len()
        )));
    }
    let tol = scenario.options().tolerances;
    let opts = scenario.options().intensity;
    let evaluate = |pose: &Pose, with_jacobian: bool| -> Result<(f64, Vector6<f64>, nalgebra::Matrix6<f64>)> {
        let mut cost = 0.0;
        let mut grad = Vector6::zeros();
        let mut normal = nalgebra::Matrix6::zeros();
        for (i, (e, &z)) in edges.iter().zip(measurements).enumerate() {
            let c = scenario.body().column(e.target);
            let (a, k) = scenario.edge_anchors(e);
            let theta = pose.transform(&c);
            let g = e.kind.eval(&theta, &a, k.as_ref(), &tol).map_err(|err| err.at_edge(i))?;
            let w = fisher_information(&e.noise, g.max(f64::MIN_POSITIVE), &opts).map_err(|err| err.at_edge(i))?;
            let r = if e.kind.is_angle() { wrap_pi(z - g) } else { z - g };
            cost += w * r * r;
            if with_jacobian {
                let gt = e.kind.grad_coords(&theta, &a, k.as_ref(), &tol).map_err(|err| err.at_edge(i))?;
                // ∂θ/∂δω = −[Qc]×
                let gw = (pose.rotation.matrix() * c).cross(&gt);
                let j = Vector6::new(gt[0], gt[1], gt[2], gw[0], gw[1], gw[2]);
                grad += j * (w * r);
                normal += j * j.transpose() * w;
            }
        }
        Ok((cost, grad, normal))
    };
    let mut pose = init;
    let mut mu = 1e-3;
    let (mut cost, mut grad, mut normal) = evaluate(&pose, true)?;
    for _ in 0..NLLS_MAX_ITER {
        let mut damped = normal;
        for d in 0..6 {
            damped[(d, d)] += mu * normal[(d, d)].max(1e-12);
        }
        let step = damped
            .cholesky()
            .ok_or_else(|| Error::RankDeficient("normal equations are singular".into()))?
            .solve(&grad);
        let dt = Vector3::new(step[0], step[1], step[2]);
        let dw = Vector3::new(step[3], step[4], step[5]);
        let candidate = Pose::new(RotationMatrix::exp(&dw).compose(&pose.rotation), pose.translation + dt);
        let (c_cost, _, _) = evaluate(&candidate, false)?;
        if c_cost <= cost {
            pose = candidate;
            let small = step.norm() <= 1e-12 * (1.0 + pose.translation.norm());
            (cost, grad, normal) = evaluate(&pose, true)?;
            mu = (mu * 0.3).max(1e-12);
            if small {
                return Ok(pose);
            }
        } else {
            mu *= 10.0;
            if mu > 1e12 {
                return Ok(pose);
            }
        }
    }
    Ok(pose)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    /// Classical MDS followed by the rigid fit.
    MdsProcrustes,
    /// Classical MDS followed by the unconstrained affine fit.
    MdsLeastSquares,
    /// Nonlinear least squares on the raw measurements, started at the true
    /// pose perturbed at the scale of the bounds. Idealized: it uses the truth.
    Nlls,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::MdsProcrustes, Estimator::MdsLeastSquares, Estimator::Nlls];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::MdsProcrustes => "mds_procrustes",
            Estimator::MdsLeastSquares => "mds_ls",
            Estimator::Nlls => "nlls",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }

    fn needs_distance_graph(self) -> bool {
        !matches!(self, Estimator::Nlls)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    /// Not necessarily a rotation for [`Estimator::MdsLeastSquares`].
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    /// `‖t̂ − t‖²`.
    pub sq_err_t: f64,
    /// `‖Q̂ − Q‖²_F`.
    pub sq_err_q: f64,
    /// Mean over landmarks of `‖θ̂_n − θ_n‖²`.
    pub sq_err_landmarks: f64,
}

impl TrialResult {
    fn new(rotation: Matrix3<f64>, translation: Vector3<f64>, scenario: &Scenario) -> Self {
        let truth = scenario.pose();
        let body = scenario.body();
        let sq_err_landmarks = body
            .columns()
            .map(|c| (rotation * c + translation - truth.transform(&c)).norm_squared())
            .sum::<f64>()
            / body.len() as f64;
        Self {
            rotation,
            translation,
            sq_err_t: (translation - truth.translation).norm_squared(),
            sq_err_q: (vec_mat(&rotation) - vec_mat(truth.rotation.matrix())).norm_squared(),
            sq_err_landmarks,
        }
    }
}

/// Averaged results for one estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    /// `E‖t̂ − t‖² / 3` over successful trials.
    pub mse_t: f64,
    pub se_t: f64,
    /// `E‖Q̂ − Q‖²_F / 9` over successful trials.
    pub mse_q: f64,
    pub se_q: f64,
    pub mse_landmarks: f64,
    pub failures: usize,
    pub fail_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub n_trials: usize,
    pub bounds: BoundReport,
    pub estimators: Vec<EstimatorSummary>,
}

impl MonteCarloSummary {
    pub fn get(&self, estimator: Estimator) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|s| s.estimator == estimator)
    }
}

/// Maps each target–anchor pair to its distance edges.
struct DistanceGraph {
    pairs: Vec<Vec<(usize, bool)>>,
}

impl DistanceGraph {
    fn new(scenario: &Scenario) -> Result<Self> {
        let n_a = scenario.n_anchors();
        let mut pairs = vec![Vec::new(); scenario.n_targets() * n_a];
        for (i, e) in scenario.edges().iter().enumerate() {
            if e.kind.is_distance() {
                let squared = matches!(e.kind, crate::dissimilarity::Dissimilarity::SquaredDistance);
                pairs[e.target * n_a + e.anchor].push((i, squared));
            }
        }
        if pairs.iter().any(Vec::is_empty) {
            return Err(Error::Validation(
                "MDS estimators need a distance edge for every target-anchor pair; use nlls for incomplete graphs".into(),
            ));
        }
        Ok(Self { pairs })
    }

    /// Full distance matrix: measured target–anchor block, body and anchor
    /// blocks from the known conformations.
    fn matrix(&self, scenario: &Scenario, z: &[f64]) -> DMatrix<f64> {
        let (n_t, n_a) = (scenario.n_targets(), scenario.n_anchors());
        let mut d = DMatrix::zeros(n_t + n_a, n_t + n_a);
        let body = scenario.body();
        let anchors = scenario.anchors();
        for i in 0..n_t {
            for j in 0..n_t {
                d[(i, j)] = (body.column(i) - body.column(j)).norm();
            }
        }
        for i in 0..n_a {
            for j in 0..n_a {
                d[(n_t + i, n_t + j)] = (anchors.column(i) - anchors.column(j)).norm();
            }
        }
        for t in 0..n_t {
            for a in 0..n_a {
                let list = &self.pairs[t * n_a + a];
                let mean = list
                    .iter()
                    .map(|&(i, squared)| if squared { z[i].max(0.0).sqrt() } else { z[i] })
                    .sum::<f64>()
                    / list.len() as f64;
                d[(t, n_t + a)] = mean;
                d[(n_t + a, t)] = mean;
            }
        }
        d
    }
}

/// Runs `n_trials` independent trials. Trial `i` draws from its own RNG
/// stream, so the summary is identical for every execution policy.
pub fn run_monte_carlo(
    scenario: &Scenario,
    estimators: &[Estimator],
    n_trials: usize,
    seed: u64,
    exec: Exec,
) -> Result<MonteCarloSummary> {
    if n_trials == 0 {
        return Err(Error::Validation("trials must be at least 1".into()));
    }
    if estimators.is_empty() {
        return Err(Error::Validation("no estimators configured".into()));
    }
    let bounds = bound_report(scenario, exec)?;
    let graph = if estimators.iter().any(|e| e.needs_distance_graph()) {
        Some(DistanceGraph::new(scenario)?)
    } else {
        None
    };
    let sd_t = bounds.crlb_t.sqrt();
    // E‖δQ‖²_F ≈ 2‖δω‖², matched to 9·ccrb over three axes
    let sd_w = (1.5 * bounds.ccrb_q).sqrt();
    let truth = *scenario.pose();

    let trials: Vec<Result<Vec<Option<TrialResult>>>> = exec.map(n_trials, |trial| {
        let mut rng = stream_rng(seed, trial as u64);
        let z = simulate_measurements(scenario, &mut rng)?;
        let positions = graph.as_ref().map(|g| {
            let d = g.matrix(scenario, &z);
            mds_positions(&d, scenario.anchors())
        });
        let mut out = Vec::with_capacity(estimators.len());
        for est in estimators {
            let r = match est {
                Estimator::MdsProcrustes => match positions.as_ref().expect("graph") {
                    Ok(p) => procrustes_fit(p, scenario.body()).ok().map(|pose| (*pose.rotation.matrix(), pose.translation)),
                    Err(_) => None,
                },
                Estimator::MdsLeastSquares => match positions.as_ref().expect("graph") {
                    Ok(p) => unconstrained_ls_fit(p, scenario.body()).ok(),
                    Err(_) => None,
                },
                Estimator::Nlls => {
                    let dt = Vector3::from_fn(|_, _| sd_t * rng.sample::<f64, _>(StandardNormal));
                    let dw = Vector3::from_fn(|_, _| sd_w * rng.sample::<f64, _>(StandardNormal));
                    let init = Pose::new(RotationMatrix::exp(&dw).compose(&truth.rotation), truth.translation + dt);
                    nlls_fit(scenario, &z, init).ok().map(|pose| (*pose.rotation.matrix(), pose.translation))
                }
            };
            out.push(r.filter(|(q, t)| q.iter().chain(t.iter()).all(|v| v.is_finite())).map(|(q, t)| TrialResult::new(q, t, scenario)));
        }
        Ok(out)
    });
    let trials: Vec<Vec<Option<TrialResult>>> = trials.into_iter().collect::<Result<_>>()?;

    let summaries = estimators
        .iter()
        .enumerate()
        .map(|(k, &estimator)| {
            let ok: Vec<&TrialResult> = trials.iter().filter_map(|t| t[k].as_ref()).collect();
            let failures = n_trials - ok.len();
            let et: Vec<f64> = ok.iter().map(|r| r.sq_err_t / 3.0).collect();
            let eq: Vec<f64> = ok.iter().map(|r| r.sq_err_q / 9.0).collect();
            let el: Vec<f64> = ok.iter().map(|r| r.sq_err_landmarks).collect();
            let (mse_t, se_t) = summarize(&et);
            let (mse_q, se_q) = summarize(&eq);
            EstimatorSummary {
                estimator,
                mse_t,
                se_t,
                mse_q,
                se_q,
                mse_landmarks: summarize(&el).0,
                failures,
                fail_rate: failures as f64 / n_trials as f64,
            }
        })
        .collect();
    Ok(MonteCarloSummary { n_trials, bounds, estimators: summaries })
}

fn summarize(xs: &[f64]) -> (f64, f64) {
    match xs.len() {
        0 => (f64::NAN, f64::NAN),
        1 => (xs[0], f64::NAN),
        _ => mean_se(xs),
    }
}

/// Landmark positions implied by a fitted pose.
pub fn fitted_positions(pose: &Pose, body: &Conformation) -> Matrix3xX<f64> {
    apply_pose(pose, body).matrix().clone()
}
