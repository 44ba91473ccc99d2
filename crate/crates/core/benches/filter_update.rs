use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use haptic_loc::filter::Execution;
use haptic_loc::{seeded_rngs, CourseScenario, FilterConfig, HapticFilter, PriorMap};

fn course_updates(c: &mut Criterion) {
    let scenario = CourseScenario::default();
    let (mut sim, _) = seeded_rngs(0);
    let (map, log) = scenario.simulate(&mut sim).expect("course simulation");
    let map = PriorMap::from(map);
    // a stretch across the block field
    let window = &log[20..60];

    let mut group = c.benchmark_group("filter_update");
    group.sample_size(20);
    for particles in [1000, 5000] {
        for execution in [Execution::Sequential, Execution::Parallel] {
            let config = FilterConfig { particle_count: particles, execution, keep_history: false, ..FilterConfig::default() };
            group.bench_with_input(BenchmarkId::new(format!("{execution:?}"), particles), &config, |b, config| {
                b.iter(|| {
                    let (_, mut rng) = seeded_rngs(1);
                    let mut filter = HapticFilter::init(config.clone(), window[0].measured.odom_pose, &mut rng).unwrap();
                    for pair in window.windows(2) {
                        filter.update(&pair[0].measured, &pair[1].measured, &map, &mut rng);
                    }
                    filter.particles().len()
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, course_updates);
criterion_main!(benches);
