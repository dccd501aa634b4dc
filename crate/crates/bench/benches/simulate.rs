use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use vecurve_core::study_runner::run_replicate;
use vecurve_core::{builtin_scenario, simulate_trial};

fn bench_simulate(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulate_trial");
    for id in [1u8, 5] {
        let spec = builtin_scenario(id).unwrap();
        g.bench_function(format!("scenario_{id}"), |b| {
            b.iter(|| simulate_trial(black_box(&spec), 11).unwrap())
        });
    }
    g.finish();

    let spec = builtin_scenario(5).unwrap();
    c.bench_function("replicate_scenario_5", |b| b.iter(|| run_replicate(black_box(&spec), 11).unwrap()));
}

criterion_group!(benches, bench_simulate);
criterion_main!(benches);
