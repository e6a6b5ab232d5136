use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use rbl_crlb::estimators::{run_monte_carlo, Estimator};
use rbl_crlb::fim::{mc_fim_oracle, FimTarget};
use rbl_crlb::intensity::{mc_fisher, NoiseModel};
use rbl_crlb::scenario::{table3, EdgeClass};
use rbl_crlb::Exec;

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn intensity(c: &mut Criterion) {
    let mut g = c.benchmark_group("mc_fisher");
    g.sample_size(10);
    let model = NoiseModel::VonMises { omega: 5.0 };
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::new(name, "1e5"), |b| {
            b.iter(|| mc_fisher(black_box(&model), 1.0, 100_000, None, 7, exec).unwrap())
        });
    }
    g.finish();
}

fn oracle(c: &mut Criterion) {
    let mut g = c.benchmark_group("fim_oracle");
    g.sample_size(10);
    let s = table3(EdgeClass::Distance, NoiseModel::Normal { sigma: 0.1 });
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::new(name, "rotation_1e4"), |b| {
            b.iter(|| mc_fim_oracle(black_box(&s), FimTarget::Rotation, 10_000, 7, exec).unwrap())
        });
    }
    g.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let mut g = c.benchmark_group("monte_carlo");
    g.sample_size(10);
    let s = table3(EdgeClass::Distance, NoiseModel::Normal { sigma: 0.05 });
    let est = [Estimator::MdsProcrustes, Estimator::MdsLeastSquares];
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::new(name, "1e3"), |b| {
            b.iter(|| run_monte_carlo(black_box(&s), &est, 1000, 7, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, intensity, oracle, monte_carlo);
criterion_main!(benches);
