//! Numerical self-checks: analytic gradients against finite differences,
//! rank-one FIM assembly against the Monte Carlo oracle, and closed-form
//! intensities against `mc_fisher`.

use std::fmt;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dissimilarity::{AoaFrame, Dissimilarity, Tolerances};
use crate::error::Result;
use crate::exec::Exec;
use crate::fim::{assemble, mc_fim_oracle, FimTarget};
use crate::geometry::{kron_landmark, vec_mat, EulerAngles, Pose, RotationMatrix};
use crate::intensity::{
    mc_fisher, nakagami_appendix_fisher, nakagami_exact_fisher, nakagami_table_fisher, stream_rng,
    von_mises_appendix_fisher, von_mises_exact_fisher, gamma_appendix_fisher, gamma_exact_fisher, McEstimate,
    NoiseModel,
};
use crate::scenario::{complete_edges, table3, EdgeClass, Scenario};

pub const GRADIENT_FD_STEP: f64 = 1e-6;
pub const GRADIENT_REL_TOL: f64 = 1e-5;
/// Per-comparison agreement threshold in standard errors.
pub const Z_THRESHOLD: f64 = 3.0;
/// Family-wise false-alarm rate used by the self-check suites.
pub const FAMILY_ALPHA: f64 = 1e-3;

/// Two-sided Bonferroni threshold: `Φ⁻¹(1 − α / 2k)`.
pub fn family_threshold(alpha: f64, comparisons: usize) -> f64 {
    Normal::standard().inverse_cdf(1.0 - alpha / (2.0 * comparisons.max(1) as f64))
}

/// How many standard errors a Monte Carlo comparison may deviate by.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Fixed(f64),
    /// Bonferroni over the comparisons in one check at this family-wise rate.
    FamilyWise(f64),
}

impl Threshold {
    pub fn z(self, comparisons: usize) -> f64 {
        match self {
            Threshold::Fixed(z) => z,
            Threshold::FamilyWise(alpha) => family_threshold(alpha, comparisons),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn pass_count(&self) -> usize {
        self.checks.iter().filter(|c| c.passed).count()
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[{}] {}/{} passed", self.suite, self.pass_count(), self.checks.len())?;
        for c in &self.checks {
            writeln!(f, "  {} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

/// Which dissimilarity a gradient check exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientKind {
    Distance,
    Aoa,
    Adoa,
}

impl GradientKind {
    pub const ALL: [GradientKind; 3] = [GradientKind::Distance, GradientKind::Aoa, GradientKind::Adoa];

    pub fn name(self) -> &'static str {
        match self {
            GradientKind::Distance => "distance",
            GradientKind::Aoa => "aoa",
            GradientKind::Adoa => "adoa",
        }
    }
}

/// Worst relative errors `‖analytic − fd‖ / ‖fd‖` over the sampled configurations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientStats {
    pub configs: usize,
    pub max_rel_translation: f64,
    pub max_rel_rotation: f64,
}

struct GradientCase {
    kind: Dissimilarity,
    pose: Pose,
    landmark: Vector3<f64>,
    anchor: Vector3<f64>,
    third: Option<Vector3<f64>>,
}

fn uniform3(rng: &mut ChaCha8Rng, half: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.random_range(-half..half))
}

fn random_rotation(rng: &mut ChaCha8Rng) -> RotationMatrix {
    let pi = std::f64::consts::PI;
    let angles = EulerAngles::new(rng.random_range(-pi..pi), rng.random_range(-pi..pi), rng.random_range(-pi..pi))
        .expect("finite");
    RotationMatrix::from_euler(angles)
}

/// Rejection-samples a configuration away from zero distances, collinear
/// triples and `|cos| → 1`.
fn random_case(kind: GradientKind, rng: &mut ChaCha8Rng, tol: &Tolerances) -> GradientCase {
    loop {
        let pose = Pose::new(random_rotation(rng), uniform3(rng, 5.0));
        let landmark = uniform3(rng, 1.0);
        let anchor = uniform3(rng, 10.0);
        let theta = pose.transform(&landmark);
        let u = theta - anchor;
        if u.norm() < 1.0 {
            continue;
        }
        let (dis, third) = match kind {
            GradientKind::Distance => (Dissimilarity::Distance, None),
            GradientKind::Aoa => {
                let frame = random_rotation(rng);
                let f = AoaFrame::new(frame.matrix().column(2).into_owned(), frame.matrix().column(0).into_owned())
                    .expect("orthonormal");
                (Dissimilarity::Aoa(f), None)
            }
            GradientKind::Adoa => {
                let k = uniform3(rng, 10.0);
                if (theta - k).norm() < 1.0 {
                    continue;
                }
                (Dissimilarity::Adoa { third: 0 }, Some(k))
            }
        };
        let Ok(g) = dis.eval(&theta, &anchor, third.as_ref(), tol) else { continue };
        if dis.is_angle() && g.cos().abs() > 0.95 {
            continue;
        }
        if dis.grad_coords(&theta, &anchor, third.as_ref(), tol).is_err() {
            continue;
        }
        return GradientCase { kind: dis, pose, landmark, anchor, third };
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(f64::MIN_POSITIVE)
}

/// Central-difference check of `∂g/∂t` and `∂g/∂vec(Q)` on `n_configs`
/// random configurations.
pub fn gradient_stats(kind: GradientKind, n_configs: usize, seed: u64) -> Result<GradientStats> {
    let tol = Tolerances::default();
    let mut rng = stream_rng(seed, kind as u64);
    let h = GRADIENT_FD_STEP;
    let mut stats = GradientStats { configs: n_configs, max_rel_translation: 0.0, max_rel_rotation: 0.0 };
    for _ in 0..n_configs {
        let case = random_case(kind, &mut rng, &tol);
        let eval = |q: &Matrix3<f64>, t: &Vector3<f64>| case.kind.eval(&(q * case.landmark + t), &case.anchor, case.third.as_ref(), &tol);
        let q = *case.pose.rotation.matrix();
        let t = case.pose.translation;
        let gt = case.kind.grad_translation(&case.pose, &case.landmark, &case.anchor, case.third.as_ref(), &tol)?;
        let gq = case.kind.grad_rotation(&case.pose, &case.landmark, &case.anchor, case.third.as_ref(), &tol)?;
        let mut fd_t = [0.0; 3];
        for (j, slot) in fd_t.iter_mut().enumerate() {
            let e = Vector3::ith(j, h);
            *slot = (eval(&q, &(t + e))? - eval(&q, &(t - e))?) / (2.0 * h);
        }
        let mut fd_q = [0.0; 9];
        for (j, slot) in fd_q.iter_mut().enumerate() {
            let (mut qp, mut qm) = (q, q);
            qp.as_mut_slice()[j] += h;
            qm.as_mut_slice()[j] -= h;
            *slot = (eval(&qp, &t)? - eval(&qm, &t)?) / (2.0 * h);
        }
        stats.max_rel_translation = stats.max_rel_translation.max(rel_err(gt.as_slice(), &fd_t));
        stats.max_rel_rotation = stats.max_rel_rotation.max(rel_err(gq.as_slice(), &fd_q));
    }
    Ok(stats)
}

/// Six checks: each dissimilarity kind against `t` and `vec(Q)`.
pub fn gradient_suite(n_configs: usize, seed: u64) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    for kind in GradientKind::ALL {
        let s = gradient_stats(kind, n_configs, seed)?;
        for (wrt, err) in [("t", s.max_rel_translation), ("vec(Q)", s.max_rel_rotation)] {
            checks.push(Check::new(
                format!("{} d/d{wrt}", kind.name()),
                err <= GRADIENT_REL_TOL,
                format!("max rel err {err:.2e} over {n_configs} configs (tol {GRADIENT_REL_TOL:.0e})"),
            ));
        }
    }
    Ok(SuiteReport { suite: "gradients".into(), checks })
}

/// `kron_landmark(c)ᵀ vec(Q) = Qc` on random rotations and landmarks.
pub fn kron_identity_max_err(n: usize, seed: u64) -> f64 {
    let mut rng = stream_rng(seed, 0);
    (0..n)
        .map(|_| {
            let q = *random_rotation(&mut rng).matrix();
            let c = uniform3(&mut rng, 2.0);
            (kron_landmark(&c).transpose() * vec_mat(&q) - q * c).amax()
        })
        .fold(0.0, f64::max)
}

/// The three reference scenarios for the oracle comparison.
pub fn lemma1_scenarios() -> Vec<(&'static str, Scenario)> {
    let aoa = EdgeClass::Aoa(AoaFrame::horizontal());
    let base = table3(EdgeClass::Distance, NoiseModel::Gamma { kappa: 10.0 });
    let mut mixed = base.edges().to_vec();
    mixed.extend(complete_edges(base.n_targets(), base.n_anchors(), aoa, NoiseModel::VonMises { omega: 20.0 }));
    vec![
        ("normal distance", table3(EdgeClass::Distance, NoiseModel::Normal { sigma: 0.1 })),
        ("von Mises AoA", table3(aoa, NoiseModel::VonMises { omega: 20.0 })),
        ("gamma distance + von Mises AoA", base.with_edges(mixed).expect("valid edges")),
    ]
}

/// Information-centric `F_t` and `F_Q` against the element-centric oracle,
/// entrywise. The comparison count for [`Threshold::FamilyWise`] is the number
/// of distinct entries of the symmetric matrix.
pub fn lemma1_check(
    name: &str,
    scenario: &Scenario,
    n_trials: usize,
    seed: u64,
    exec: Exec,
    threshold: Threshold,
) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (label, target) in [("F_t", FimTarget::Translation), ("F_Q", FimTarget::Rotation)] {
        let f = assemble(scenario, target, exec)?;
        let oracle = mc_fim_oracle(scenario, target, n_trials, seed, exec)?;
        let (z, exact) = oracle.max_z(&f.matrix);
        let n = f.dim();
        let limit = threshold.z(n * (n + 1) / 2);
        out.push(Check::new(
            format!("{name} {label}"),
            oracle.agrees_with(&f.matrix, limit),
            format!("max |z| {z:.2} (limit {limit:.2}) over {} entries, {n_trials} trials", f.matrix.len()) + &if exact > 0.0 {
                format!(", zero-variance deviation {exact:.1e}")
            } else {
                String::new()
            },
        ));
    }
    Ok(out)
}

pub fn lemma1_suite(n_trials: usize, seed: u64, exec: Exec) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    for (i, (name, s)) in lemma1_scenarios().iter().enumerate() {
        let threshold = Threshold::FamilyWise(FAMILY_ALPHA);
        checks.extend(lemma1_check(name, s, n_trials, seed.wrapping_add(i as u64), exec, threshold)?);
    }
    Ok(SuiteReport { suite: "fim oracle".into(), checks })
}

pub const NORMAL_GRID: [f64; 5] = [0.01, 0.05, 0.1, 0.5, 1.0];
pub const VON_MISES_GRID: [f64; 5] = [0.5, 1.0, 2.0, 5.0, 10.0];
pub const NAKAGAMI_GRID: [f64; 5] = [1.5, 2.0, 3.0, 5.0, 10.0];
pub const GAMMA_GRID: [f64; 5] = [3.0, 5.0, 10.0, 20.0, 50.0];

/// `mc_fisher` at `g = 1` next to the candidate closed forms.
#[derive(Debug, Clone, PartialEq)]
pub struct FormComparison {
    pub model: NoiseModel,
    pub estimate: McEstimate,
    /// `(label, value, z)`.
    pub forms: Vec<(&'static str, f64, f64)>,
    pub z_limit: f64,
}

impl FormComparison {
    fn new(model: NoiseModel, estimate: McEstimate, forms: &[(&'static str, f64)], z_limit: f64) -> Self {
        let forms = forms.iter().map(|&(l, v)| (l, v, estimate.z_score(v))).collect();
        Self { model, estimate, forms, z_limit }
    }

    pub fn matches(&self, label: &str) -> bool {
        self.forms.iter().any(|(l, _, z)| *l == label && *z <= self.z_limit)
    }

    pub fn describe(&self) -> String {
        let parts: Vec<String> = self
            .forms
            .iter()
            .map(|(l, v, z)| format!("{l} {v:.5} (z {z:.1}{})", if *z <= self.z_limit { ", match" } else { "" }))
            .collect();
        format!("mc {:.5} ± {:.5}; {}", self.estimate.value, self.estimate.std_error, parts.join(", "))
    }
}

pub fn compare_forms(
    model: NoiseModel,
    forms: &[(&'static str, f64)],
    n_samples: usize,
    seed: u64,
    exec: Exec,
    z_limit: f64,
) -> Result<FormComparison> {
    let est = mc_fisher(&model, 1.0, n_samples, None, seed, exec)?;
    Ok(FormComparison::new(model, est, forms, z_limit))
}

/// Nakagami oracle against the two published forms and the exact one.
pub fn nakagami_report(n_samples: usize, seed: u64, exec: Exec, z_limit: f64) -> Result<Vec<FormComparison>> {
    NAKAGAMI_GRID
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let forms = [
                ("table", nakagami_table_fisher(m, 1.0)),
                ("appendix", nakagami_appendix_fisher(m, 1.0)?),
                ("exact", nakagami_exact_fisher(m, 1.0)),
            ];
            compare_forms(NoiseModel::Nakagami { m }, &forms, n_samples, seed.wrapping_add(i as u64), exec, z_limit)
        })
        .collect()
}

fn verdict(rows: &[FormComparison], labels: &[&str]) -> String {
    labels
        .iter()
        .map(|l| {
            let hits = rows.iter().filter(|r| r.matches(l)).count();
            format!("{l} matches {hits}/{}", rows.len())
        })
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn intensity_suite(n_samples: usize, seed: u64, exec: Exec) -> Result<SuiteReport> {
    let z = family_threshold(FAMILY_ALPHA, NORMAL_GRID.len() + VON_MISES_GRID.len() + GAMMA_GRID.len() + NAKAGAMI_GRID.len());
    let mut checks = Vec::new();
    let mut stream = seed;
    let mut next = || {
        stream = stream.wrapping_add(1);
        stream
    };
    for sigma in NORMAL_GRID {
        let c = compare_forms(NoiseModel::Normal { sigma }, &[("1/sigma^2", 1.0 / (sigma * sigma))], n_samples, next(), exec, z)?;
        checks.push(Check::new(format!("normal sigma={sigma}"), c.matches("1/sigma^2"), c.describe()));
    }
    let mut von_mises = Vec::new();
    for omega in VON_MISES_GRID {
        let c = compare_forms(
            NoiseModel::VonMises { omega },
            &[("omega^2/2", von_mises_appendix_fisher(omega)), ("omega*I1/I0", von_mises_exact_fisher(omega))],
            n_samples,
            next(),
            exec,
            z,
        )?;
        checks.push(Check::new(format!("von Mises omega={omega}"), c.matches("omega*I1/I0"), c.describe()));
        von_mises.push(c);
    }
    checks.push(Check::new("von Mises published form", true, verdict(&von_mises, &["omega^2/2"])));
    let mut gamma = Vec::new();
    for kappa in GAMMA_GRID {
        let c = compare_forms(
            NoiseModel::Gamma { kappa },
            &[("appendix", gamma_appendix_fisher(kappa, 1.0)), ("exact", gamma_exact_fisher(kappa, 1.0))],
            n_samples,
            next(),
            exec,
            z,
        )?;
        checks.push(Check::new(format!("gamma kappa={kappa}"), c.matches("exact"), c.describe()));
        gamma.push(c);
    }
    checks.push(Check::new("gamma published form", true, verdict(&gamma, &["appendix"])));
    let naka = nakagami_report(n_samples, next(), exec, z)?;
    for row in &naka {
        checks.push(Check::new(format!("nakagami m={}", match row.model { NoiseModel::Nakagami { m } => m, _ => f64::NAN }), row.matches("exact"), row.describe()));
    }
    checks.push(Check::new("nakagami published forms", true, verdict(&naka, &["table", "appendix"])));
    Ok(SuiteReport { suite: "intensities".into(), checks })
}

/// Sample sizes for [`run_all`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationBudget {
    pub gradient_configs: usize,
    pub oracle_trials: usize,
    pub intensity_samples: usize,
}

impl Default for ValidationBudget {
    fn default() -> Self {
        Self { gradient_configs: 1000, oracle_trials: 100_000, intensity_samples: 1_000_000 }
    }
}

pub fn run_all(budget: ValidationBudget, seed: u64, exec: Exec) -> Result<Vec<SuiteReport>> {
    Ok(vec![
        gradient_suite(budget.gradient_configs, seed)?,
        lemma1_suite(budget.oracle_trials, seed, exec)?,
        intensity_suite(budget.intensity_samples, seed, exec)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradients_small() {
        let r = gradient_suite(100, 1).unwrap();
        assert_eq!(r.checks.len(), 6);
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn kron_identity() {
        assert!(kron_identity_max_err(200, 2) < 1e-14);
    }

    #[test]
    fn nakagami_published_forms_disagree() {
        let rows = nakagami_report(400_000, 3, Exec::Parallel, Z_THRESHOLD).unwrap();
        for r in &rows {
            assert!(r.matches("exact"), "{}", r.describe());
            assert!(!r.matches("appendix"), "{}", r.describe());
        }
    }

    #[test]
    fn bonferroni_thresholds() {
        assert!((family_threshold(0.05, 1) - 1.959963984540054).abs() < 1e-9);
        assert!(family_threshold(1e-3, 45) > family_threshold(1e-3, 6));
        assert_eq!(Threshold::Fixed(3.0).z(81), 3.0);
    }

    #[test]
    fn report_format() {
        let r = SuiteReport {
            suite: "demo".into(),
            checks: vec![Check::new("a", true, "ok"), Check::new("b", false, "bad")],
        };
        assert!(!r.passed());
        assert_eq!(r.to_string(), "[demo] 1/2 passed\n  PASS a: ok\n  FAIL b: bad\n");
    }
}
