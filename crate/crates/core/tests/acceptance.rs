use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Matrix3};
use rand::Rng;

use rbl_crlb::bounds::{
    bound_report, constraint_jacobian, constraint_matrix, constraint_vector, crlb_rotation, crlb_rotation_approx,
    crlb_translation, crlb_translation_approx, BoundReport,
};
use rbl_crlb::dissimilarity::AoaFrame;
use rbl_crlb::estimators::{run_monte_carlo, Estimator};
use rbl_crlb::geometry::{unvec, vec_mat, EulerAngles, RotationMatrix};
use rbl_crlb::intensity::{stream_rng, NoiseModel};
use rbl_crlb::scenario::{complete_edges, table3, EdgeClass, Scenario};
use rbl_crlb::stats::loglog_slope;
use rbl_crlb::validation::{self, Threshold};
use rbl_crlb::Exec;

const SEED: u64 = 20_261_017;

fn report(n: u32, passed: bool, detail: &str) {
    println!("acceptance criterion {n}: {} ({detail})", if passed { "PASS" } else { "FAIL" });
}

fn sigma_grid() -> Vec<f64> {
    (0..10).map(|i| 10f64.powf(-2.0 + 2.0 * i as f64 / 9.0)).collect()
}

fn normal_ranges(sigma: f64) -> Scenario {
    table3(EdgeClass::Distance, NoiseModel::Normal { sigma })
}

fn bounds(s: &Scenario) -> BoundReport {
    bound_report(s, Exec::Parallel).unwrap()
}

fn criterion_1_oracle_equivalence() -> bool {
    let mut ok = true;
    let mut lines = Vec::new();
    for (i, (name, s)) in validation::lemma1_scenarios().iter().enumerate() {
        let start = Instant::now();
        let checks = validation::lemma1_check(name, s, 100_000, SEED + i as u64, Exec::Parallel, Threshold::Fixed(3.0)).unwrap();
        let took = start.elapsed();
        let fast = took <= Duration::from_secs(120);
        for c in &checks {
            println!("  {} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            ok &= c.passed;
        }
        ok &= fast;
        lines.push(format!("{name} {:.1}s", took.as_secs_f64()));
    }
    report(1, ok, &lines.join("; "));
    ok
}

fn criterion_2_gradient_suite() -> bool {
    let start = Instant::now();
    let r = validation::gradient_suite(1000, SEED).unwrap();
    let took = start.elapsed();
    print!("{r}");
    let ok = r.passed() && took <= Duration::from_secs(10);
    report(2, ok, &format!("{}/6 gradients within 1e-5, {:.2}s", r.pass_count(), took.as_secs_f64()));
    ok
}

fn criterion_3_intensity_closed_forms() -> bool {
    let start = Instant::now();
    let n = 1_000_000;
    let mut ok = true;
    for (i, sigma) in validation::NORMAL_GRID.into_iter().enumerate() {
        let c = validation::compare_forms(NoiseModel::Normal { sigma }, &[("1/sigma^2", 1.0 / (sigma * sigma))], n, SEED + i as u64, Exec::Parallel, 3.0)
            .unwrap();
        let hit = c.matches("1/sigma^2");
        println!("  {} normal sigma={sigma}: {}", if hit { "PASS" } else { "FAIL" }, c.describe());
        ok &= hit;
    }
    let mut exact_hits = 0;
    for (i, omega) in validation::VON_MISES_GRID.into_iter().enumerate() {
        let c = validation::compare_forms(
            NoiseModel::VonMises { omega },
            &[
                ("omega^2/2", rbl_crlb::intensity::von_mises_appendix_fisher(omega)),
                ("omega*I1/I0", rbl_crlb::intensity::von_mises_exact_fisher(omega)),
            ],
            n,
            SEED + 10 + i as u64,
            Exec::Parallel,
            3.0,
        )
        .unwrap();
        let hit = c.matches("omega^2/2");
        exact_hits += c.matches("omega*I1/I0") as usize;
        println!("  {} von Mises omega={omega} vs omega^2/2: {}", if hit { "PASS" } else { "FAIL" }, c.describe());
        ok &= hit;
    }
    let naka = validation::nakagami_report(n, SEED + 20, Exec::Parallel, 3.0).unwrap();
    for row in &naka {
        println!("  nakagami {:?}: {}", row.model, row.describe());
    }
    let table = naka.iter().filter(|r| r.matches("table")).count();
    let appendix = naka.iter().filter(|r| r.matches("appendix")).count();
    let exact = naka.iter().filter(|r| r.matches("exact")).count();
    let which = match (table == naka.len(), appendix == naka.len()) {
        (true, false) => "table form matches",
        (false, true) => "appendix form matches",
        (true, true) => "both forms match",
        (false, false) => "neither published form matches",
    };
    println!("  nakagami verdict: {which} (table {table}/5, appendix {appendix}/5, 4m/Y {exact}/5)");
    let took = start.elapsed();
    ok &= took <= Duration::from_secs(60);
    report(
        3,
        ok,
        &format!(
            "von Mises omega*I1/I0 matched {exact_hits}/5; nakagami: {which}; {:.1}s",
            took.as_secs_f64()
        ),
    );
    ok
}

fn criterion_4_sigma_squared_scaling() -> bool {
    let sigmas = sigma_grid();
    let crlb: Vec<f64> = sigmas.iter().map(|&s| bounds(&normal_ranges(s)).crlb_t).collect();
    let slope = loglog_slope(&sigmas, &crlb).unwrap();
    let ok = (slope - 2.0).abs() <= 0.01;
    report(4, ok, &format!("slope {slope:.6} over sigma in [1e-2, 1]"));
    ok
}

fn mixed_ranges_bearings(sigma: f64) -> Scenario {
    let s = normal_ranges(sigma);
    let mut edges = s.edges().to_vec();
    edges.extend(complete_edges(
        s.n_targets(),
        s.n_anchors(),
        EdgeClass::Aoa(AoaFrame::horizontal()),
        NoiseModel::VonMises { omega: 100.0 },
    ));
    s.with_edges(edges).unwrap()
}

fn criterion_5_bound_orderings() -> bool {
    let mut ok = [true; 3];
    for sigma in sigma_grid() {
        let full = normal_ranges(sigma);
        let b = bounds(&full);
        ok[0] &= b.ccrb_q < b.crlb_q;
        let part = bounds(&full.subset(0.8, SEED).unwrap());
        ok[1] &= part.crlb_t >= b.crlb_t && part.crlb_q >= b.crlb_q && part.ccrb_q >= b.ccrb_q;
        let fused = bounds(&mixed_ranges_bearings(sigma));
        ok[2] &= fused.crlb_t <= b.crlb_t && fused.crlb_q <= b.crlb_q && fused.ccrb_q <= b.ccrb_q;
    }
    let all = ok.iter().all(|&v| v);
    report(
        5,
        all,
        &format!("(i) ccrb<crlb {}, (ii) 80% >= full {}, (iii) fused <= ranges {}", ok[0], ok[1], ok[2]),
    );
    all
}

fn criterion_6_estimators_vs_bounds() -> bool {
    let start = Instant::now();
    let mut ok = true;
    let mut gap = None;
    for sigma in [0.01, 0.05, 0.1] {
        let s = normal_ranges(sigma);
        let mc = run_monte_carlo(&s, &[Estimator::MdsProcrustes, Estimator::MdsLeastSquares], 10_000, SEED, Exec::Parallel)
            .unwrap();
        let p = mc.get(Estimator::MdsProcrustes).unwrap();
        let l = mc.get(Estimator::MdsLeastSquares).unwrap();
        let t_ok = p.mse_t + 3.0 * p.se_t >= mc.bounds.crlb_t;
        let q_ok = p.mse_q + 3.0 * p.se_q >= mc.bounds.ccrb_q;
        println!(
            "  sigma={sigma}: procrustes mse_t {:.3e}±{:.1e} vs crlb_t {:.3e} [{}], mse_Q {:.3e}±{:.1e} vs ccrb_Q {:.3e} [{}]; ls mse_Q {:.3e}; failures {}",
            p.mse_t, p.se_t, mc.bounds.crlb_t, t_ok, p.mse_q, p.se_q, mc.bounds.ccrb_q, q_ok, l.mse_q, p.failures
        );
        ok &= t_ok && q_ok;
        if sigma == 0.1 {
            gap = Some((l.mse_q, p.mse_q));
        }
    }
    let (ls, pr) = gap.unwrap();
    ok &= ls > pr;
    let took = start.elapsed();
    ok &= took <= Duration::from_secs(300);
    report(6, ok, &format!("ls/procrustes rotation MSE at sigma=0.1: {:.2}; {:.1}s", ls / pr, took.as_secs_f64()));
    ok
}

fn random_orthogonal(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    a.qr().q()
}

fn criterion_7_approximation_ordering() -> bool {
    let mut rng = stream_rng(SEED, 7);
    let mut violations = 0;
    let mut iff_fail = 0;
    let trials = 10_000;
    for i in 0..trials {
        let n = if i % 2 == 0 { 3 } else { 9 };
        let equal = i % 4 < 2;
        let eigs: Vec<f64> = if equal {
            vec![rng.random_range(0.01..100.0); n]
        } else {
            (0..n).map(|_| rng.random_range(0.01..100.0)).collect()
        };
        let q = random_orthogonal(n, &mut rng);
        let f = &q * DMatrix::from_diagonal(&DVector::from_vec(eigs)) * q.transpose();
        let (approx, exact) = if n == 3 {
            (crlb_translation_approx(&f).unwrap(), crlb_translation(&f).unwrap())
        } else {
            (crlb_rotation_approx(&f).unwrap(), crlb_rotation(&f).unwrap().value)
        };
        if approx > exact * (1.0 + 1e-12) {
            violations += 1;
        }
        let tight = (exact - approx).abs() <= 1e-12 * exact;
        if tight != equal {
            iff_fail += 1;
        }
    }
    let ok = violations == 0 && iff_fail == 0;
    report(7, ok, &format!("{trials} SPD matrices, {violations} ordering violations, {iff_fail} equality mismatches"));
    ok
}

fn criterion_8_constraint_algebra() -> bool {
    let mut rng = stream_rng(SEED, 8);
    let pi = std::f64::consts::PI;
    let (mut gm, mut mtm, mut jac) = (0f64, 0f64, 0f64);
    for _ in 0..1000 {
        let angles = EulerAngles::new(rng.random_range(-pi..pi), rng.random_range(-pi..pi), rng.random_range(-pi..pi)).unwrap();
        let q: Matrix3<f64> = *RotationMatrix::from_euler(angles).matrix();
        let m = constraint_matrix(&q).unwrap();
        let g = constraint_jacobian(&q);
        gm = gm.max((g * m).norm());
        mtm = mtm.max((m.transpose() * m - Matrix3::identity() * 2.0).amax());
        let h = 1e-3;
        let v = vec_mat(&q);
        for j in 0..9 {
            let (mut p, mut n) = (v, v);
            p[j] += h;
            n[j] -= h;
            let col = (constraint_vector(&unvec(&p)) - constraint_vector(&unvec(&n))) / (2.0 * h);
            jac = jac.max((col - g.column(j)).amax());
        }
    }
    let ok = gm <= 1e-10 && mtm <= 1e-12 && jac <= 1e-10;
    report(
        8,
        ok,
        &format!("1000 rotations: max ||GM||_F {gm:.1e}, max |M'M - 2I| {mtm:.1e}, G vs finite differences {jac:.1e}"),
    );
    ok
}

fn main() {
    let criteria: [fn() -> bool; 8] = [
        criterion_1_oracle_equivalence,
        criterion_2_gradient_suite,
        criterion_3_intensity_closed_forms,
        criterion_4_sigma_squared_scaling,
        criterion_5_bound_orderings,
        criterion_6_estimators_vs_bounds,
        criterion_7_approximation_ordering,
        criterion_8_constraint_algebra,
    ];
    let passed = criteria.iter().filter(|c| c()).count();
    println!("acceptance: {passed}/{} criteria passed", criteria.len());
    if passed < criteria.len() {
        std::process::exit(1);
    }
}
