//! Fisher information assembly.
//!
//! [`assemble`] builds `F = Σ λ_na v_na v_naᵀ` edge by edge (information
//! centric). [`mc_fim_oracle`] estimates the same matrix as
//! `E[∇ ln L ∇ᵀ ln L]` from sampled measurement vectors, with the score taken
//! by finite differences of the full log-likelihood.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::exec::{chunks, Exec};
use crate::geometry::{kron_landmark, Pose};
use crate::intensity::{fisher_information, stream_rng, LogDensity};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FimTarget {
    Translation,
    Rotation,
    Landmarks,
}

impl FimTarget {
    pub fn dim(self, scenario: &Scenario) -> usize {
        match self {
            FimTarget::Translation => 3,
            FimTarget::Rotation => 9,
            FimTarget::Landmarks => 3 * scenario.n_targets(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    pub target: FimTarget,
    pub matrix: DMatrix<f64>,
    pub edge_count: usize,
}

impl FisherMatrix {
    pub fn zeros(target: FimTarget, dim: usize) -> Self {
        Self { target, matrix: DMatrix::zeros(dim, dim), edge_count: 0 }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (&self.matrix - self.matrix.transpose()).amax() <= tol * self.matrix.amax().max(1.0)
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        self.matrix.clone().symmetric_eigenvalues()
    }

    /// Minimum eigenvalue ≥ −1e-9 ‖F‖.
    pub fn is_psd(&self) -> bool {
        let ev = self.eigenvalues();
        ev.min() >= -1e-9 * self.matrix.norm().max(f64::MIN_POSITIVE)
    }

    pub fn add_rank_one(&mut self, u: &DVector<f64>) {
        self.matrix.ger(1.0, u, u, 1.0);
        self.edge_count += 1;
    }
}

/// Per-edge information vectors `u = √λ v` in edge order. Summing their outer
/// products gives the Fisher matrix.
pub fn information_vectors(scenario: &Scenario, target: FimTarget, exec: Exec) -> Result<Vec<DVector<f64>>> {
    let dim = target.dim(scenario);
    let pose = scenario.pose();
    let tol = scenario.options().tolerances;
    let opts = scenario.options().intensity;
    let edges = scenario.edges();
    exec.map(edges.len(), |i| {
        let e = &edges[i];
        let c = scenario.body().column(e.target);
        let (a, k) = scenario.edge_anchors(e);
        let g = scenario.true_dissimilarity(i)?;
        let lambda = fisher_information(&e.noise, g, &opts).map_err(|err| err.at_edge(i))?;
        let gt = e
            .kind
            .grad_translation(pose, &c, &a, k.as_ref(), &tol)
            .map_err(|err| err.at_edge(i))?;
        let scale = lambda.sqrt();
        let mut u = DVector::zeros(dim);
        match target {
            FimTarget::Translation => u.rows_mut(0, 3).copy_from(&(gt * scale)),
            FimTarget::Rotation => u.copy_from(&(kron_landmark(&c) * gt * scale)),
            FimTarget::Landmarks => u.rows_mut(3 * e.target, 3).copy_from(&(gt * scale)),
        }
        Ok(u)
    })
    .into_iter()
    .collect()
}

/// Information-centric assembly; the rank-one terms are added in edge order.
pub fn assemble(scenario: &Scenario, target: FimTarget, exec: Exec) -> Result<FisherMatrix> {
    let mut f = FisherMatrix::zeros(target, target.dim(scenario));
    for u in information_vectors(scenario, target, exec)? {
        f.add_rank_one(&u);
    }
    Ok(f)
}

pub fn fim_landmarks(scenario: &Scenario, exec: Exec) -> Result<FisherMatrix> {
    assemble(scenario, FimTarget::Landmarks, exec)
}

pub fn fim_translation(scenario: &Scenario, exec: Exec) -> Result<FisherMatrix> {
    assemble(scenario, FimTarget::Translation, exec)
}

pub fn fim_rotation(scenario: &Scenario, exec: Exec) -> Result<FisherMatrix> {
    assemble(scenario, FimTarget::Rotation, exec)
}

/// Element-centric Monte Carlo estimate with entrywise standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleEstimate {
    pub mean: DMatrix<f64>,
    pub std_error: DMatrix<f64>,
    pub trials: usize,
}

impl OracleEstimate {
    /// Largest `|F - mean| / se` over entries with nonzero standard error, and
    /// the largest absolute deviation where the standard error is zero.
    pub fn max_z(&self, reference: &DMatrix<f64>) -> (f64, f64) {
        let mut z: f64 = 0.0;
        let mut exact: f64 = 0.0;
        for ((m, s), r) in self.mean.iter().zip(self.std_error.iter()).zip(reference.iter()) {
            let d = (m - r).abs();
            if *s > 0.0 {
                z = z.max(d / s);
            } else {
                exact = exact.max(d);
            }
        }
        (z, exact)
    }

    /// True when every entry is within `k` standard errors (entries with zero
    /// standard error must match to 1e-12 relative).
    pub fn agrees_with(&self, reference: &DMatrix<f64>, k: f64) -> bool {
        let (z, exact) = self.max_z(reference);
        z <= k && exact <= 1e-12 * reference.amax().max(1.0)
    }
}

pub const ORACLE_MIN_TRIALS: usize = 10_000;
pub const ORACLE_FD_STEP: f64 = 1e-5;
const ORACLE_CHUNK: usize = 1024;

/// Landmark positions for a perturbed parameter vector.
fn perturbed_targets(scenario: &Scenario, target: FimTarget, j: usize, delta: f64) -> Vec<Vector3<f64>> {
    let pose: &Pose = scenario.pose();
    let body = scenario.body();
    match target {
        FimTarget::Translation => {
            let mut t = pose.translation;
            t[j] += delta;
            body.columns().map(|c| pose.rotation.matrix() * c + t).collect()
        }
        FimTarget::Rotation => {
            // unconstrained perturbation of vec(Q), column-major
            let mut q: Matrix3<f64> = *pose.rotation.matrix();
            q.as_mut_slice()[j] += delta;
            body.columns().map(|c| q * c + pose.translation).collect()
        }
        FimTarget::Landmarks => {
            let mut pts: Vec<_> = body.columns().map(|c| pose.transform(&c)).collect();
            pts[j / 3][j % 3] += delta;
            pts
        }
    }
}

fn dissimilarities_at(scenario: &Scenario, targets: &[Vector3<f64>]) -> Result<Vec<f64>> {
    let tol = scenario.options().tolerances;
    scenario
        .edges()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let (a, k) = scenario.edge_anchors(e);
            e.kind.eval(&targets[e.target], &a, k.as_ref(), &tol).map_err(|err| err.at_edge(i))
        })
        .collect()
}

/// Element-centric FIM estimate over `n_trials` sampled measurement vectors.
pub fn mc_fim_oracle(
    scenario: &Scenario,
    target: FimTarget,
    n_trials: usize,
    seed: u64,
    exec: Exec,
) -> Result<OracleEstimate> {
    if n_trials < ORACLE_MIN_TRIALS {
        return Err(Error::InvalidParameter(format!(
            "oracle needs at least {ORACLE_MIN_TRIALS} trials"
        )));
    }
    let dim = target.dim(scenario);
    let edges = scenario.edges();
    if edges.is_empty() {
        return Ok(OracleEstimate {
            mean: DMatrix::zeros(dim, dim),
            std_error: DMatrix::zeros(dim, dim),
            trials: n_trials,
        });
    }
    let h = ORACLE_FD_STEP;
    let g0 = scenario.true_dissimilarities()?;
    // The dissimilarities at θ ± h e_j do not depend on the sampled
    // measurements, so they are evaluated once.
    let mut g_plus = Vec::with_capacity(dim);
    let mut g_minus = Vec::with_capacity(dim);
    for j in 0..dim {
        g_plus.push(dissimilarities_at(scenario, &perturbed_targets(scenario, target, j, h))?);
        g_minus.push(dissimilarities_at(scenario, &perturbed_targets(scenario, target, j, -h))?);
    }
    let densities: Vec<LogDensity> = edges.iter().map(|e| LogDensity::new(&e.noise)).collect::<Result<_>>()?;

    let parts = chunks(n_trials, ORACLE_CHUNK);
    let partial: Vec<Result<(DMatrix<f64>, DMatrix<f64>)>> = exec.map(parts.len(), |c| {
        let (lo, hi) = parts[c];
        let mut rng = stream_rng(seed, c as u64);
        let mut s1 = DMatrix::zeros(dim, dim);
        let mut s2 = DMatrix::zeros(dim, dim);
        let mut r = vec![0.0; edges.len()];
        let mut score = DVector::zeros(dim);
        for _ in lo..hi {
            for (ri, (d, g)) in r.iter_mut().zip(densities.iter().zip(&g0)) {
                *ri = d.sample(*g, &mut rng);
            }
            for j in 0..dim {
                let mut s = 0.0;
                for (e, d) in densities.iter().enumerate() {
                    s += d.log_pdf(r[e], g_plus[j][e])? - d.log_pdf(r[e], g_minus[j][e])?;
                }
                score[j] = s / (2.0 * h);
            }
            for a in 0..dim {
                for b in 0..dim {
                    let p = score[a] * score[b];
                    s1[(a, b)] += p;
                    s2[(a, b)] += p * p;
                }
            }
        }
        Ok((s1, s2))
    });
    let mut s1 = DMatrix::zeros(dim, dim);
    let mut s2 = DMatrix::zeros(dim, dim);
    for p in partial {
        let (a, b) = p?;
        s1 += a;
        s2 += b;
    }
    let n = n_trials as f64;
    let mean = &s1 / n;
    let std_error = DMatrix::from_fn(dim, dim, |i, j| {
        let m = mean[(i, j)];
        let var = ((s2[(i, j)] / n - m * m) * n / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    });
    Ok(OracleEstimate { mean, std_error, trials: n_trials })
}
