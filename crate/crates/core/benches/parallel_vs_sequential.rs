use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fedamp_core::analysis::hoeffding_check;
use fedamp_core::engine::{run, RunConfig};
use fedamp_core::exec;
use fedamp_core::objectives::{NoiseModel, QuadraticPopulation, QuadraticSpec};
use fedamp_core::participation::{generate_schedule, PatternSpec, WeightSchedule};
use std::hint::black_box;

fn setup() -> (QuadraticPopulation, WeightSchedule, RunConfig) {
    let pop = QuadraticSpec::new(64, 32, 1.0, 1.0).build(1).unwrap();
    let sched = generate_schedule(
        &PatternSpec::RegularizedPermutation { participants: 32 },
        64,
        100,
        2,
    )
    .unwrap();
    let cfg = RunConfig::new(0.005, 4.0, 5, 2, 100, vec![1.0; 32]);
    (pop, sched, cfg)
}

fn both<F: Fn() + Sync>(c: &mut Criterion, group: &str, f: F) {
    let mut g = c.benchmark_group(group);
    g.sample_size(10);
    g.bench_function(BenchmarkId::from_parameter("sequential"), |b| {
        b.iter(|| exec::sequential(&f))
    });
    g.bench_function(BenchmarkId::from_parameter("parallel"), |b| b.iter(&f));
    g.finish();
}

fn benches(c: &mut Criterion) {
    let (pop, sched, cfg) = setup();
    let noise = NoiseModel::Gaussian { sigma: 1.0 };
    both(c, "engine_run", || {
        black_box(run(&pop, &noise, &sched, &cfg, 3).unwrap());
    });
    both(c, "hoeffding_monte_carlo", || {
        let spec = PatternSpec::IndependentUniform { participants: 4 };
        black_box(hoeffding_check(&spec, 16, 64, 0.05, 2000, 4).unwrap());
    });
    let seeds: Vec<u64> = (0..8).collect();
    both(c, "seed_sweep", || {
        black_box(exec::map_ordered(&seeds, |&s| {
            run(&pop, &noise, &sched, &cfg, s)
                .unwrap()
                .min_grad_norm_sq()
        }));
    });
}

criterion_group!(parallel_vs_sequential, benches);
criterion_main!(parallel_vs_sequential);
